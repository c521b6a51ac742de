//! Printable and interactable hypertext notes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notegen::assets::content_type;
use crate::notegen::scheme::{KeyFrameAnnotation, NoteScheme, StepNote};
use crate::notegen::summary::{HighlightTarget, StepSummary};
use crate::notegen::AssetStore;
use crate::structure::dag::{parallel_siblings, topological_layers, StructureGraph};
use crate::text::is_emoji_char;

macro_rules! option_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(rename_all = "SCREAMING_SNAKE_CASE")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let norm = s.trim().to_ascii_uppercase().replace('-', "_");
                $(if norm == $text {
                    return Ok($name::$variant);
                })+
                Err(Error::InvalidArgument(format!(
                    concat!("unknown ", stringify!($name), " `{}`, expected one of: ", $($text, " "),+),
                    s
                )))
            }
        }
    };
}

option_enum!(RenderModality { TextOnly => "TEXT_ONLY", TextImage => "TEXT_IMAGE" });
option_enum!(Verbosity { Concise => "CONCISE", Verbose => "VERBOSE" });
option_enum!(Engagement { Printable => "PRINTABLE", Interactable => "INTERACTABLE" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub modality: RenderModality,
    pub verbosity: Verbosity,
    pub engagement: Engagement,
    pub show_emoji: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            modality: RenderModality::TextImage,
            verbosity: Verbosity::Concise,
            engagement: Engagement::Printable,
            show_emoji: true,
        }
    }
}

/// How image references are written.
#[derive(Debug, Clone)]
pub enum AssetLinks {
    /// Embedded as data URIs.
    Inline,
    /// Relative URLs `<prefix><name>`.
    Relative(String),
}

pub struct Renderer<'a> {
    pub store: &'a AssetStore,
    pub links: AssetLinks,
}

fn esc(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

fn escaped(s: &str) -> String {
    let mut out = String::new();
    esc(s, &mut out);
    out
}

fn clock(t: f64) -> String {
    let total = t.max(0.0).round() as u64;
    format!("{:02}:{:02}", total / 60, total % 60)
}

/// Remove emoji code points, keeping all other characters in place.
fn no_emoji(s: &str) -> String {
    s.chars().filter(|c| !is_emoji_char(*c)).collect()
}

/// Element ids in reading order: topological layers, parallel groups kept together by start time.
/// Each entry is `(ids, is_group)`.
pub fn reading_order(g: &StructureGraph, start_of: &dyn Fn(&str) -> f64) -> Result<Vec<(Vec<String>, bool)>> {
    let groups = parallel_siblings(g);
    let mut out = Vec::new();
    let by_time = |ids: &mut Vec<String>| ids.sort_by(|a, b| start_of(a).total_cmp(&start_of(b)).then(a.cmp(b)));
    for mut layer in topological_layers(g)? {
        by_time(&mut layer);
        let mut done: Vec<&str> = Vec::new();
        for id in &layer {
            if done.contains(&id.as_str()) {
                continue;
            }
            match groups.iter().find(|grp| grp.contains(id)) {
                Some(grp) => {
                    let mut members = grp.clone();
                    by_time(&mut members);
                    done.extend(grp.iter().map(String::as_str));
                    out.push((members, true));
                }
                None => {
                    done.push(id);
                    out.push((vec![id.clone()], false));
                }
            }
        }
    }
    Ok(out)
}

const STYLE: &str = "body{font-family:sans-serif;max-width:52em;margin:2em auto;line-height:1.45}\
.chapter{margin-bottom:2em}.step{margin:1em 0 1em 1em}.parallel-group{border-left:3px solid #999;padding-left:.8em}\
.group-label{font-size:.85em;color:#555;text-transform:uppercase}.time{color:#777;font-size:.85em}\
em.tip{color:#05603a}em.warning{color:#b42318;font-weight:bold}em.quantity{color:#1d4ed8}\
img{max-width:100%}figure{margin:.5em 0}.steps-row{display:flex;gap:1em;overflow-x:auto}.steps-row .step{min-width:16em}";

impl Renderer<'_> {
    fn src(&self, name: &str) -> Result<String> {
        if !self.store.contains(name) {
            return Err(Error::MissingAsset(name.to_string()));
        }
        Ok(match &self.links {
            AssetLinks::Inline => {
                let data = base64::engine::general_purpose::STANDARD.encode(self.store.read(name)?);
                format!("data:{};base64,{data}", content_type(name))
            }
            AssetLinks::Relative(prefix) => format!("{prefix}{name}"),
        })
    }

    fn img(&self, name: &str, alt: &str, out: &mut String) -> Result<()> {
        let _ = write!(out, "<img src=\"{}\" alt=\"{}\">", escaped(&self.src(name)?), escaped(alt));
        Ok(())
    }

    /// Every asset the chosen options will emit must exist.
    fn check_assets(&self, scheme: &NoteScheme, opts: &RenderOptions) -> Result<()> {
        if opts.modality == RenderModality::TextOnly {
            return Ok(());
        }
        let interactive = opts.engagement == Engagement::Interactable;
        for c in &scheme.chapters {
            for name in c.gif.iter().filter(|_| interactive) {
                self.src(name)?;
            }
            for s in &c.steps {
                if let Some(t) = &s.thumbnail {
                    self.src(&t.asset)?;
                }
                for k in &s.keyframes {
                    self.src(&k.asset)?;
                }
                for name in s.gif.iter().filter(|_| interactive) {
                    self.src(name)?;
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, scheme: &NoteScheme, opts: &RenderOptions) -> Result<String> {
        self.check_assets(scheme, opts)?;
        let text = |s: &str| if opts.show_emoji { s.to_string() } else { no_emoji(s) };
        let mut out = String::new();
        let _ = write!(
            out,
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body class=\"{}\">\n<h1>{}</h1>\n",
            escaped(&text(&scheme.video.title)),
            opts.engagement.as_str().to_ascii_lowercase(),
            escaped(&text(&scheme.video.title)),
        );
        let chapter_start: BTreeMap<String, f64> = scheme.chapters.iter().map(|c| (c.id.to_string(), c.t_s)).collect();
        let order = reading_order(&scheme.chapter_graph(), &|id| chapter_start[id])?;
        for (ids, group) in order {
            if group {
                out.push_str("<div class=\"parallel-group\">\n<p class=\"group-label\">parallel group</p>\n");
            }
            for id in ids {
                let ci = scheme.chapters.iter().position(|c| c.id.to_string() == id).expect("graph nodes are chapters");
                self.chapter(scheme, ci, opts, &text, &mut out)?;
            }
            if group {
                out.push_str("</div>\n");
            }
        }
        out.push_str("</body>\n</html>\n");
        Ok(out)
    }

    fn chapter(&self, scheme: &NoteScheme, ci: usize, opts: &RenderOptions, text: &dyn Fn(&str) -> String, out: &mut String) -> Result<()> {
        let c = &scheme.chapters[ci];
        let interactive = opts.engagement == Engagement::Interactable;
        let _ = writeln!(out, "<section class=\"chapter\" id=\"chapter-{}\" data-t=\"{:.3}\">", c.id, c.t_s);
        let heading = format!(
            "<h2>{}. {} <span class=\"time\">{}–{}</span></h2>\n",
            c.id,
            escaped(&text(&c.title)),
            clock(c.t_s),
            clock(c.t_e)
        );
        if interactive {
            let _ = write!(out, "<details open>\n<summary>{}</summary>\n", heading.trim_end());
        } else {
            out.push_str(&heading);
        }
        let _ = writeln!(out, "<p class=\"chapter-summary\">{}</p>", escaped(&text(&c.summary)));
        if interactive && opts.modality == RenderModality::TextImage {
            if let Some(g) = &c.gif {
                out.push_str("<figure class=\"chapter-gif\">");
                self.img(g, &format!("Chapter {} preview", c.id), out)?;
                out.push_str("</figure>\n");
            }
        }
        let start: BTreeMap<String, f64> = c.steps.iter().map(|s| (s.id.to_string(), s.t_s)).collect();
        let order = reading_order(&scheme.step_graph(ci), &|id| start[id])?;
        for (ids, group) in order {
            if group {
                out.push_str("<div class=\"parallel-group\">\n<p class=\"group-label\">parallel group</p>\n");
                if interactive {
                    out.push_str("<div class=\"steps-row\">\n");
                }
            }
            for id in ids {
                let s = c.steps.iter().find(|s| s.id.to_string() == id).expect("graph nodes are steps");
                self.step(s, opts, text, out)?;
            }
            if group {
                if interactive {
                    out.push_str("</div>\n");
                }
                out.push_str("</div>\n");
            }
        }
        if interactive {
            out.push_str("</details>\n");
        }
        out.push_str("</section>\n");
        Ok(())
    }

    fn step(&self, s: &StepNote, opts: &RenderOptions, text: &dyn Fn(&str) -> String, out: &mut String) -> Result<()> {
        let images = opts.modality == RenderModality::TextImage;
        let interactive = opts.engagement == Engagement::Interactable;
        let _ = write!(
            out,
            "<article class=\"step\" id=\"step-{}\" data-t=\"{:.3}\">\n<h3><span class=\"step-id\">{}</span> {} <span class=\"time\">{}</span></h3>\n",
            s.id,
            s.t_s,
            s.id,
            escaped(&text(&s.title)),
            clock(s.t_s)
        );
        let (target, emoji) = match opts.verbosity {
            Verbosity::Concise => (HighlightTarget::Concise, None),
            Verbosity::Verbose => (HighlightTarget::Verbose, s.summary.emoji.as_deref().filter(|_| opts.show_emoji)),
        };
        out.push_str("<p class=\"step-summary\">");
        if let Some(e) = emoji {
            let _ = write!(out, "<span class=\"emoji\">{}</span> ", escaped(e));
        }
        highlighted(&s.summary, target, opts.show_emoji, out);
        out.push_str("</p>\n");
        if images {
            if let Some(t) = &s.thumbnail {
                out.push_str("<figure class=\"thumbnail\">");
                self.img(&t.asset, &format!("Step {} thumbnail", s.id), out)?;
                out.push_str("</figure>\n");
            }
            if interactive {
                if let Some(g) = &s.gif {
                    out.push_str("<figure class=\"step-gif\">");
                    self.img(g, &format!("Step {} preview", s.id), out)?;
                    out.push_str("</figure>\n");
                }
            }
        }
        if !s.keyframes.is_empty() {
            out.push_str("<ul class=\"keyframes\">\n");
            for k in &s.keyframes {
                self.keyframe(k, images, text, out)?;
            }
            out.push_str("</ul>\n");
        }
        out.push_str("</article>\n");
        Ok(())
    }

    fn keyframe(&self, k: &KeyFrameAnnotation, images: bool, text: &dyn Fn(&str) -> String, out: &mut String) -> Result<()> {
        let detail: Vec<String> = [&k.ocr_text, &k.explanation]
            .into_iter()
            .filter(|t| !t.is_empty())
            .map(|t| escaped(&text(t)))
            .collect();
        let label = format!(
            "<span class=\"kind\">{}</span> <span class=\"time\">{}</span> {}",
            k.kind.as_str(),
            clock(k.timestamp),
            detail.join(" · ")
        );
        let _ = write!(out, "<li class=\"keyframe {}\">", k.kind.as_str().to_ascii_lowercase());
        if images {
            out.push_str("<figure>");
            self.img(&k.asset, k.kind.as_str(), out)?;
            let _ = write!(out, "<figcaption>{}</figcaption></figure>", label.trim_end());
        } else {
            out.push_str(label.trim_end());
        }
        out.push_str("</li>\n");
        Ok(())
    }
}

/// Summary text with highlight spans emphasized; overlapping spans after the first are ignored.
fn highlighted(summary: &StepSummary, target: HighlightTarget, show_emoji: bool, out: &mut String) {
    let chars: Vec<char> = summary.text(target).chars().collect();
    let piece = |a: usize, b: usize| {
        let s: String = chars[a..b].iter().collect();
        escaped(&if show_emoji { s } else { no_emoji(&s) })
    };
    let mut spans: Vec<_> = summary.highlights.iter().filter(|h| h.target == target && h.end <= chars.len()).collect();
    spans.sort_by_key(|h| (h.start, h.end));
    let mut at = 0;
    for h in spans {
        if h.start < at || h.start >= h.end {
            continue;
        }
        out.push_str(&piece(at, h.start));
        let _ = write!(out, "<em class=\"{}\">{}</em>", h.kind.as_str().to_ascii_lowercase(), piece(h.start, h.end));
        at = h.end;
    }
    out.push_str(&piece(at, chars.len()));
}

/// Render with assets embedded inline.
pub fn render_document(scheme: &NoteScheme, opts: &RenderOptions, store: &AssetStore) -> Result<String> {
    Renderer {
        store,
        links: AssetLinks::Inline,
    }
    .render(scheme, opts)
}

/// Printable rendering; rejects interactable options.
pub fn render_printable(scheme: &NoteScheme, opts: &RenderOptions, store: &AssetStore) -> Result<String> {
    if opts.engagement != Engagement::Printable {
        return Err(Error::InvalidArgument("render_printable needs PRINTABLE engagement".into()));
    }
    render_document(scheme, opts, store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::schemes::diamond;

    fn setup() -> (tempfile::TempDir, AssetStore, NoteScheme) {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path()).unwrap();
        let s = diamond(&store).unwrap();
        (dir, store, s)
    }

    fn positions(html: &str, ids: &[&str], prefix: &str) -> Vec<usize> {
        ids.iter()
            .map(|id| {
                let needle = format!("id=\"{prefix}-{id}\"");
                assert_eq!(html.matches(&needle).count(), 1, "{needle}");
                html.find(&needle).unwrap()
            })
            .collect()
    }

    #[test]
    fn diamond_order_with_group_label() {
        let (_d, store, s) = setup();
        let html = render_printable(&s, &RenderOptions::default(), &store).unwrap();
        let pos = positions(&html, &["1", "2", "3", "4", "5"], "chapter");
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let label = html.find("parallel group").unwrap();
        let close = html[label..].find("</div>").unwrap() + label;
        assert!(pos[0] < label && label < pos[1] && pos[3] < close && close < pos[4]);
        // Chapters 2-4 and steps 5.2-5.4.
        assert_eq!(html.matches("class=\"group-label\"").count(), 2);
    }

    #[test]
    fn text_only_has_no_images() {
        let (_d, store, s) = setup();
        let opts = RenderOptions {
            modality: RenderModality::TextOnly,
            ..Default::default()
        };
        let html = render_printable(&s, &opts, &store).unwrap();
        assert_eq!(html.matches("<img").count(), 0);
        let html = render_printable(&s, &RenderOptions::default(), &store).unwrap();
        assert_eq!(html.matches("<img").count(), 26);
    }

    #[test]
    fn emoji_toggle() {
        let (_d, store, s) = setup();
        for verbosity in [Verbosity::Concise, Verbosity::Verbose] {
            let opts = RenderOptions {
                verbosity,
                show_emoji: false,
                ..Default::default()
            };
            let html = render_printable(&s, &opts, &store).unwrap();
            assert!(!html.chars().any(is_emoji_char), "{verbosity:?}");
        }
        let verbose = RenderOptions {
            verbosity: Verbosity::Verbose,
            ..Default::default()
        };
        assert!(render_printable(&s, &verbose, &store).unwrap().contains("🔧"));
    }

    #[test]
    fn highlights_are_emphasized() {
        let (_d, store, s) = setup();
        let opts = RenderOptions {
            verbosity: Verbosity::Verbose,
            ..Default::default()
        };
        let html = render_printable(&s, &opts, &store).unwrap();
        assert!(html.contains("<em class=\"quantity\">2 cups</em>"));
    }

    #[test]
    fn missing_asset() {
        let (_d, store, mut s) = setup();
        s.chapters[0].steps[0].thumbnail.as_mut().unwrap().asset = format!("{}.png", "f".repeat(64));
        let err = render_printable(&s, &RenderOptions::default(), &store).unwrap_err();
        assert_eq!(err.code(), "MISSING_ASSET");
        let text_only = RenderOptions {
            modality: RenderModality::TextOnly,
            ..Default::default()
        };
        render_printable(&s, &text_only, &store).unwrap();
    }

    #[test]
    fn option_parsing() {
        assert_eq!("text-only".parse::<RenderModality>().unwrap(), RenderModality::TextOnly);
        assert_eq!("VERBOSE".parse::<Verbosity>().unwrap(), Verbosity::Verbose);
        assert!("loud".parse::<Engagement>().is_err());
    }
}
