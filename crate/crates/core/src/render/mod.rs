//! Interchange format and hypertext rendering.

pub mod canonical;
pub mod html;

pub use canonical::{canonical_text, parse_scheme, serialize_scheme, to_canonical};
pub use html::{render_document, render_printable, AssetLinks, Renderer, Engagement, RenderModality, RenderOptions, Verbosity};
