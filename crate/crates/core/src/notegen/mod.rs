//! Summaries, thumbnails, GIFs and the note scheme.

pub mod assets;
pub mod gif;
pub mod scheme;
pub mod summary;
pub mod thumbnail;

pub use assets::AssetStore;
pub use gif::{assemble_gif, GifSpec};
pub use scheme::{assemble_scheme, KeyFrameAnnotation, KeyFrameKind, NoteScheme, SchemeParts, VideoMeta, SCHEMA_VERSION};
pub use summary::{summarize_chapter, summarize_step, Highlight, HighlightKind, HighlightTarget, StepSummary};
pub use thumbnail::{retrieve_thumbnail, Thumbnail};
