//! Synthetic videos with matching mock tables.

pub mod schemes;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::container::Clip;
use crate::ingest::transcript::RawSegment;
use crate::keyinfo::StaticKind;
use crate::media::Raster;
use crate::notegen::AssetStore;
use crate::pipeline::{write_atomic, ASSETS_DIR, SCHEME_FILE};
use crate::providers::mock::{MockTables, ScriptedAnnotation};
use crate::providers::Modality;
use crate::render::canonical::serialize_scheme;

pub const VIDEO_FILE: &str = "video.nfv";
pub const FIXTURE_DIM: usize = 64;
pub const AUDIO_RATE: u32 = 8000;

pub const SCENARIOS: [&str; 6] = ["door-repair", "budget-meal", "fitness", "scenes", "zoom", "diamond"];

/// One constant-picture stretch of a synthetic video.
#[derive(Debug, Clone)]
pub struct Shot {
    pub seconds: u32,
    pub image: Raster,
    pub caption: Option<String>,
    pub annotations: Vec<ScriptedAnnotation>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub title: String,
    pub fps: u32,
    pub shots: Vec<Shot>,
    pub speech: Vec<RawSegment>,
    pub tables: MockTables,
}

impl Scenario {
    fn new(title: &str, fps: u32) -> Self {
        let tables = MockTables {
            dim: Some(FIXTURE_DIM),
            ..MockTables::default()
        };
        Self {
            title: title.into(),
            fps,
            shots: Vec::new(),
            speech: Vec::new(),
            tables,
        }
    }

    pub fn duration(&self) -> f64 {
        self.shots.iter().map(|s| s.seconds as f64).sum()
    }

    fn shot(&mut self, seconds: u32, image: Raster, caption: &str) -> &mut Shot {
        self.shots.push(Shot {
            seconds,
            image,
            caption: (!caption.is_empty()).then(|| caption.to_string()),
            annotations: Vec::new(),
        });
        self.shots.last_mut().unwrap()
    }

    fn say(&mut self, t_s: f64, t_e: f64, text: &str) {
        self.speech.push(RawSegment { t_s, t_e, text: text.into() });
    }

    pub fn clip(&self) -> Clip {
        let frames: Vec<Raster> = self
            .shots
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.image.clone(), (s.seconds * self.fps) as usize))
            .collect();
        let (w, h) = frames.first().map(|f| (f.width(), f.height())).unwrap_or((0, 0));
        Clip {
            width: w,
            height: h,
            fps_num: self.fps,
            fps_den: 1,
            title: self.title.clone(),
            frames,
            audio: Some((AUDIO_RATE, tone(self.duration()))),
        }
    }

    /// Tables with captions, annotations and transcript filled from the shots.
    pub fn mock_tables(&self) -> MockTables {
        let mut t = self.tables.clone();
        for s in &self.shots {
            let key = s.image.digest().hex();
            if let Some(c) = &s.caption {
                t.captions.insert(key.clone(), c.clone());
            }
            if !s.annotations.is_empty() {
                t.annotations.insert(key, s.annotations.clone());
            }
        }
        t.transcript = self.speech.clone();
        t
    }

    /// Video, transcript and mock tables under `dir`; returns the video path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(VIDEO_FILE);
        self.clip().write(&path)?;
        self.mock_tables().save(dir)?;
        Ok(path)
    }
}

/// Quiet 220 Hz tone, audible enough to not count as silence.
fn tone(seconds: f64) -> Vec<i16> {
    let n = (seconds * AUDIO_RATE as f64).round() as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / AUDIO_RATE as f64;
            (2000.0 * (2.0 * std::f64::consts::PI * 220.0 * t).sin()).round() as i16
        })
        .collect()
}

/// Two-tone diagonal pattern, distinct per `(a, b)`.
pub fn pattern(w: u32, h: u32, a: [u8; 3], b: [u8; 3], period: u32) -> Raster {
    Raster::from_fn(w, h, |x, y| if ((x + 2 * y) / period).is_multiple_of(2) { a } else { b })
}

fn palette(i: u32) -> [u8; 3] {
    const COLORS: [[u8; 3]; 10] = [
        [200, 60, 50],
        [60, 160, 70],
        [50, 90, 200],
        [220, 190, 40],
        [150, 60, 170],
        [40, 170, 180],
        [230, 130, 40],
        [120, 120, 120],
        [240, 240, 230],
        [30, 30, 40],
    ];
    COLORS[(i as usize) % COLORS.len()]
}

fn scene(i: u32) -> Raster {
    pattern(96, 64, palette(i), palette(i + 3), 4 + i % 5)
}

fn annotation(kind: StaticKind, ocr: &str, explanation: &str) -> ScriptedAnnotation {
    ScriptedAnnotation {
        kind,
        ocr_text: ocr.into(),
        explanation: explanation.into(),
    }
}

/// Five sequential chapters of two shots each.
pub fn door_repair() -> Scenario {
    let mut s = Scenario::new("How to Fix a Squeaky Door", 2);
    let chapters = [
        ("Open the door fully and find the squeaking hinge.", "Tap the hinge pin up with a hammer and a nail.", "Door swung open", "Close view of the top hinge"),
        ("Pull the pin out and wipe it with a rag.", "Check the pin for rust or bent spots.", "Hand holding the hinge pin", "Rag wiping the pin"),
        ("Spray a light coat of lubricant on the pin.", "Wait 10 min so the oil can soak in.", "Spray can aimed at the pin", "Oiled pin on a paper towel"),
        ("Slide the pin back into the hinge.", "Tap it down until the head sits flush.", "Pin going into the knuckles", "Hammer tapping the pin head"),
        ("Swing the door several times to spread the oil.", "Wipe off any drips so they do not stain the floor.", "Door moving back and forth", "Clean hinge after wiping"),
    ];
    for (c, (first, second, cap_a, cap_b)) in chapters.iter().enumerate() {
        let c = c as u32;
        let base = c as f64 * 12.0;
        s.shot(6, scene(2 * c), cap_a);
        s.shot(6, scene(2 * c + 1), cap_b);
        s.say(base + 0.5, base + 5.5, first);
        s.say(base + 6.5, base + 11.5, second);
    }
    s.shots[5].annotations.push(annotation(StaticKind::TextOverlay, "WAIT 10 MIN", "Let the oil soak in before reassembly."));
    s.shots[2]
        .annotations
        .push(annotation(StaticKind::Diagram, "", "Exploded view of the hinge showing the pin and knuckles."));
    s.shots[8].annotations.push(annotation(StaticKind::SpecialMark, "", "Red circle around the pin head."));
    s
}

/// Shopping, three independent dishes, plating.
pub fn budget_meal() -> Scenario {
    let mut s = Scenario::new("Budget Meal Prep for the Week", 2);
    let lines = [
        ("Buy rice, dried beans and a bag of greens.", "The whole list costs under 15 dollars."),
        ("Rinse 2 cups of rice and cook it covered.", "Let it rest off the heat for 5 min."),
        ("Simmer the soaked beans with garlic.", "Season with salt only at the end."),
        ("Chop the greens and toss them with lemon.", "Keep the dressing on the side."),
        ("Portion everything into five boxes.", "Refrigerate the boxes within two hours."),
    ];
    for (c, (a, b)) in lines.iter().enumerate() {
        let c = c as u32;
        let base = c as f64 * 10.0;
        s.shot(10, scene(c + 1), "");
        s.say(base + 0.5, base + 4.5, a);
        s.say(base + 5.0, base + 9.5, b);
    }
    s.shots[1].annotations.push(annotation(StaticKind::TextOverlay, "2 CUPS RICE", "Amount of rice for five portions."));
    s.tables.script(
        "classify_relations@video",
        json!({"relations": [
            {"kind": "SEQUENTIAL", "from": 1, "to": 2},
            {"kind": "SEQUENTIAL", "from": 1, "to": 3},
            {"kind": "SEQUENTIAL", "from": 1, "to": 4},
            {"kind": "PARALLEL", "group": [2, 3, 4]},
            {"kind": "SEQUENTIAL", "from": 2, "to": 5},
            {"kind": "SEQUENTIAL", "from": 3, "to": 5},
            {"kind": "SEQUENTIAL", "from": 4, "to": 5}
        ]}),
    );
    s
}

/// Three chapters, the middle one without speech.
pub fn fitness() -> Scenario {
    let mut s = Scenario::new("Ten Minute Mobility Routine", 2);
    s.shot(8, scene(6), "Standing on a mat");
    s.shot(8, scene(7), "Slow hip circles");
    s.shot(8, scene(8), "Hamstring stretch against a wall");
    s.say(0.5, 7.5, "Stand tall with your feet hip width apart.");
    s.say(16.5, 23.5, "Hold each stretch for 30 seconds and breathe slowly.");
    s.shots[1].annotations.push(annotation(StaticKind::SpecialMark, "", "Arrow showing the circle direction."));
    s
}

/// Solid red, green and blue, five seconds each.
pub fn scenes() -> Scenario {
    let mut s = Scenario::new("Color Cuts", 1);
    for rgb in [[255, 0, 0], [0, 255, 0], [0, 0, 255]] {
        s.shot(5, Raster::solid(64, 64, rgb), "");
    }
    s
}

/// Wide shot of a textured panel, then a 2x close-up of its centre.
pub fn zoom_pair() -> (Raster, Raster, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    const SIZE: u32 = 512;
    const CELL: u32 = 8;
    let inner = SIZE / 2;
    let cells = inner / CELL;
    let grays: Vec<u8> = (0..cells * cells).map(|_| rng.random_range(30..=250)).collect();
    let cell = |x: u32, y: u32| grays[((y / CELL) * cells + x / CELL) as usize];
    let close = Raster::from_fn(SIZE, SIZE, |x, y| {
        let g = cell(x / 2, y / 2);
        [g, g, g]
    });
    let median_close = crate::media::median(&close.luma()) / 255.0;
    let bg = ((median_close - 0.35) * 255.0).round().clamp(0.0, 255.0) as u8;
    let lo = (SIZE - inner) / 2;
    let wide = Raster::from_fn(SIZE, SIZE, |x, y| {
        if (lo..lo + inner).contains(&x) && (lo..lo + inner).contains(&y) {
            let g = cell(x - lo, y - lo);
            [g, g, g]
        } else {
            [bg, bg, bg]
        }
    });
    let shift = (median_close - bg as f64 / 255.0).abs();
    (wide, close, shift)
}

/// Red to blue, then a wide-to-close cut of the same subject.
pub fn zoom() -> Scenario {
    let mut s = Scenario::new("Zoom Cut", 1);
    let (wide, close, _) = zoom_pair();
    s.shot(3, Raster::solid(512, 512, [255, 0, 0]), "");
    s.shot(3, Raster::solid(512, 512, [0, 0, 255]), "");
    s.shot(3, wide.clone(), "Wide shot of the panel");
    s.shot(3, close.clone(), "Close-up of the panel");
    // The two framings show the same subject.
    let shared: Vec<f64> = (0..FIXTURE_DIM).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let mut near = shared.clone();
    near[1] = 0.3;
    s.tables.set_embedding(Modality::SemanticImage, wide.digest().hex(), shared);
    s.tables.set_embedding(Modality::SemanticImage, close.digest().hex(), near);
    s
}

pub fn scenario(name: &str) -> Result<Scenario> {
    Ok(match name {
        "door-repair" => door_repair(),
        "budget-meal" => budget_meal(),
        "fitness" => fitness(),
        "scenes" => scenes(),
        "zoom" => zoom(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario `{other}` (expected one of {})",
                SCENARIOS.join(", ")
            )))
        }
    })
}

/// Write a named fixture into `dir`. Video scenarios return the video path; `diamond` writes a scheme with assets.
pub fn write_fixture(name: &str, dir: &Path) -> Result<PathBuf> {
    if name == "diamond" {
        std::fs::create_dir_all(dir)?;
        let store = AssetStore::open(dir.join(ASSETS_DIR))?;
        let scheme = schemes::diamond(&store)?;
        let path = dir.join(SCHEME_FILE);
        write_atomic(&path, serialize_scheme(&scheme).as_bytes())?;
        return Ok(path);
    }
    scenario(name)?.write(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoom_pair_depth_shift() {
        let (wide, close, shift) = zoom_pair();
        assert_eq!((wide.width(), close.width()), (512, 512));
        assert!((shift - 0.35).abs() < 0.01, "{shift}");
    }

    #[test]
    fn clip_matches_duration() {
        let s = door_repair();
        assert_eq!(s.duration(), 60.0);
        let clip = s.clip();
        assert_eq!(clip.frames.len(), 120);
        assert_eq!(clip.audio.as_ref().unwrap().1.len(), 60 * AUDIO_RATE as usize);
    }

    #[test]
    fn unknown_scenario() {
        assert_eq!(scenario("nope").unwrap_err().code(), "INVALID_ARGUMENT");
    }
}
