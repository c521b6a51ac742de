//! Video decoders: native `NFV1`, YUV4MPEG2, and anything `ffmpeg` can read.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::container::{NfvFile, MAGIC};
use super::AudioTrack;
use crate::error::{Error, Result};
use crate::media::Raster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaInfo {
    /// Seconds from first frame to end of the last frame.
    pub duration: f64,
    pub native_fps: f64,
    pub source_uri: String,
    pub width: u32,
    pub height: u32,
    pub title: String,
}

pub trait VideoDecoder: Send {
    fn info(&self) -> &MediaInfo;

    fn frame_count(&self) -> usize;

    /// Decode the frames at `indices` (ascending native frame numbers).
    fn frames(&mut self, indices: &[usize]) -> Result<Vec<Raster>>;

    /// Mono audio, or `None` when the container has no audio stream.
    fn audio(&mut self) -> Result<Option<AudioTrack>>;
}

/// Open a local path or HTTP(S) URL. URLs are downloaded to a temporary file first.
pub fn open(source: &str) -> Result<Box<dyn VideoDecoder>> {
    let path = if source.starts_with("http://") || source.starts_with("https://") {
        download(source)?
    } else {
        PathBuf::from(source.strip_prefix("file://").unwrap_or(source))
    };
    open_path(&path, source)
}

fn open_path(path: &Path, uri: &str) -> Result<Box<dyn VideoDecoder>> {
    let mut head = [0u8; 9];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| Error::UnreadableSource(format!("{}: {e}", path.display())))?;
    let head = &head[..n];
    if head.starts_with(MAGIC) {
        let bytes = std::fs::read(path)?;
        return Ok(Box::new(NfvDecoder::new(NfvFile::parse(bytes)?, uri)?));
    }
    if head.starts_with(b"YUV4MPEG2") {
        return Ok(Box::new(Y4mDecoder::open(path, uri)?));
    }
    FfmpegDecoder::open(path, uri).map(|d| Box::new(d) as Box<dyn VideoDecoder>)
}

fn download(url: &str) -> Result<PathBuf> {
    let resp = ureq::get(url)
        .call()
        .map_err(|e| Error::UnreadableSource(format!("download {url}: {e}")))?;
    let mut body = Vec::new();
    resp.into_body()
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| Error::UnreadableSource(format!("download {url}: {e}")))?;
    let name = crate::media::Digest::of_bytes(url.as_bytes()).short();
    let path = std::env::temp_dir().join(format!("noteforge-{name}.video"));
    std::fs::write(&path, body)?;
    Ok(path)
}

fn checked_info(
    frame_count: usize,
    fps: f64,
    uri: &str,
    width: u32,
    height: u32,
    title: String,
) -> Result<MediaInfo> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::UnreadableSource(format!("invalid frame rate {fps}")));
    }
    if frame_count == 0 {
        return Err(Error::EmptyVideo);
    }
    Ok(MediaInfo {
        duration: frame_count as f64 / fps,
        native_fps: fps,
        source_uri: uri.to_string(),
        width,
        height,
        title,
    })
}

pub struct NfvDecoder {
    file: NfvFile,
    info: MediaInfo,
}

impl NfvDecoder {
    pub fn new(file: NfvFile, uri: &str) -> Result<Self> {
        let fps = file.fps_num as f64 / file.fps_den as f64;
        let info = checked_info(file.frame_count(), fps, uri, file.width, file.height, file.title.clone())?;
        Ok(Self { file, info })
    }
}

impl VideoDecoder for NfvDecoder {
    fn info(&self) -> &MediaInfo {
        &self.info
    }

    fn frame_count(&self) -> usize {
        self.file.frame_count()
    }

    fn frames(&mut self, indices: &[usize]) -> Result<Vec<Raster>> {
        crate::par::try_map(crate::par::Exec::available(), indices, |&i| self.file.frame(i))
    }

    fn audio(&mut self) -> Result<Option<AudioTrack>> {
        Ok(self.file.audio()?.map(|samples| AudioTrack {
            sample_rate: self.file.audio_rate,
            samples: samples.into(),
            source_uri: self.info.source_uri.clone(),
        }))
    }
}

/// YUV4MPEG2 reader (8-bit 4:2:0, 4:2:2, 4:4:4 and mono). No audio stream.
pub struct Y4mDecoder {
    path: PathBuf,
    info: MediaInfo,
    frame_count: usize,
}

fn y4m_err(e: y4m::Error) -> Error {
    Error::UnreadableSource(format!("y4m: {e:?}"))
}

impl Y4mDecoder {
    pub fn open(path: &Path, uri: &str) -> Result<Self> {
        let mut dec = y4m::decode(BufReader::new(File::open(path)?)).map_err(y4m_err)?;
        if dec.get_bit_depth() != 8 {
            return Err(Error::UnreadableSource("only 8-bit y4m is supported".into()));
        }
        let rate = dec.get_framerate();
        if rate.den == 0 {
            return Err(Error::UnreadableSource("y4m frame rate has zero denominator".into()));
        }
        let (w, h) = (dec.get_width() as u32, dec.get_height() as u32);
        let mut frame_count = 0;
        loop {
            match dec.read_frame() {
                Ok(_) => frame_count += 1,
                Err(y4m::Error::EOF) => break,
                Err(e) => return Err(y4m_err(e)),
            }
        }
        let fps = rate.num as f64 / rate.den as f64;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let info = checked_info(frame_count, fps, uri, w, h, stem)?;
        Ok(Self {
            path: path.to_path_buf(),
            info,
            frame_count,
        })
    }
}

/// BT.601 limited-range YCbCr to RGB.
fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [u8; 3] {
    let y = (y as f64 - 16.0) * 1.164_383;
    let cb = cb as f64 - 128.0;
    let cr = cr as f64 - 128.0;
    let r = y + 1.596_027 * cr;
    let g = y - 0.391_762 * cb - 0.812_968 * cr;
    let b = y + 2.017_232 * cb;
    [r, g, b].map(|v| v.round().clamp(0.0, 255.0) as u8)
}

impl VideoDecoder for Y4mDecoder {
    fn info(&self) -> &MediaInfo {
        &self.info
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn frames(&mut self, indices: &[usize]) -> Result<Vec<Raster>> {
        let mut dec = y4m::decode(BufReader::new(File::open(&self.path)?)).map_err(y4m_err)?;
        let (w, h) = (self.info.width as usize, self.info.height as usize);
        let (sx, sy) = match dec.get_colorspace() {
            y4m::Colorspace::C444 => (1, 1),
            y4m::Colorspace::C422 => (2, 1),
            y4m::Colorspace::Cmono => (0, 0),
            y4m::Colorspace::C420
            | y4m::Colorspace::C420jpeg
            | y4m::Colorspace::C420paldv
            | y4m::Colorspace::C420mpeg2 => (2, 2),
            other => {
                return Err(Error::UnreadableSource(format!("unsupported y4m colorspace {other:?}")))
            }
        };
        let mut out = Vec::with_capacity(indices.len());
        let mut wanted = indices.iter().peekable();
        let mut n = 0usize;
        while let Some(&&target) = wanted.peek() {
            let frame = dec.read_frame().map_err(y4m_err)?;
            while wanted.peek() == Some(&&n) {
                let (yp, up, vp) = (frame.get_y_plane(), frame.get_u_plane(), frame.get_v_plane());
                let cw = if sx == 0 { 0 } else { w.div_ceil(sx) };
                let mut px = Vec::with_capacity(w * h * 3);
                for row in 0..h {
                    for col in 0..w {
                        let y = yp[row * w + col];
                        let rgb = if sx == 0 {
                            [y, y, y]
                        } else {
                            let ci = (row / sy) * cw + col / sx;
                            ycbcr_to_rgb(y, up[ci], vp[ci])
                        };
                        px.extend_from_slice(&rgb);
                    }
                }
                out.push(Raster::new(w as u32, h as u32, px)?);
                wanted.next();
            }
            n += 1;
            if n > target && wanted.peek().is_some_and(|&&t| t < n) {
                return Err(Error::InvalidArgument("frame indices must be ascending".into()));
            }
        }
        Ok(out)
    }

    fn audio(&mut self) -> Result<Option<AudioTrack>> {
        Ok(None)
    }
}

/// Decoder backed by the `ffmpeg`/`ffprobe` executables on `PATH`.
pub struct FfmpegDecoder {
    path: PathBuf,
    info: MediaInfo,
    frame_count: usize,
}

#[derive(Deserialize)]
struct Probe {
    #[serde(default)]
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Deserialize)]
struct ProbeStream {
    codec_type: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
    r_frame_rate: Option<String>,
}

#[derive(Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

impl FfmpegDecoder {
    pub fn open(path: &Path, uri: &str) -> Result<Self> {
        let out = Command::new("ffprobe")
            .args(["-v", "error", "-show_entries", "stream=codec_type,width,height,r_frame_rate"])
            .args(["-show_entries", "format=duration", "-of", "json"])
            .arg(path)
            .output()
            .map_err(|e| {
                Error::UnreadableSource(format!(
                    "{}: not an NFV1/y4m file and ffprobe is unavailable ({e})",
                    path.display()
                ))
            })?;
        if !out.status.success() {
            return Err(Error::UnreadableSource(format!(
                "ffprobe rejected {}: {}",
                path.display(),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let probe: Probe = serde_json::from_slice(&out.stdout)
            .map_err(|e| Error::UnreadableSource(format!("ffprobe output: {e}")))?;
        let video = probe
            .streams
            .iter()
            .find(|s| s.codec_type.as_deref() == Some("video"))
            .ok_or_else(|| Error::UnreadableSource("no video stream".into()))?;
        let (w, h) = (video.width.unwrap_or(0), video.height.unwrap_or(0));
        if w == 0 || h == 0 {
            return Err(Error::UnreadableSource("video stream without dimensions".into()));
        }
        let fps = video
            .r_frame_rate
            .as_deref()
            .and_then(|r| {
                let (n, d) = r.split_once('/')?;
                Some(n.parse::<f64>().ok()? / d.parse::<f64>().ok()?)
            })
            .unwrap_or(0.0);
        let duration: f64 = probe
            .format
            .and_then(|f| f.duration)
            .and_then(|d| d.parse().ok())
            .unwrap_or(0.0);
        let frame_count = (duration * fps).round() as usize;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let info = checked_info(frame_count, fps, uri, w, h, stem)?;
        Ok(Self {
            path: path.to_path_buf(),
            info,
            frame_count,
        })
    }
}

impl VideoDecoder for FfmpegDecoder {
    fn info(&self) -> &MediaInfo {
        &self.info
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn frames(&mut self, indices: &[usize]) -> Result<Vec<Raster>> {
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(&self.path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::UnreadableSource(format!("spawn ffmpeg: {e}")))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (w, h) = (self.info.width, self.info.height);
        let mut buf = vec![0u8; w as usize * h as usize * 3];
        let mut out = Vec::with_capacity(indices.len());
        let mut last: Option<Raster> = None;
        let mut n = 0usize;
        for &target in indices {
            while n <= target {
                match stdout.read_exact(&mut buf) {
                    Ok(()) => last = Some(Raster::new(w, h, buf.clone())?),
                    // Probed duration can overshoot the decodable frame count by one.
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(Error::UnreadableSource(format!("ffmpeg: {e}"))),
                }
                n += 1;
            }
            out.push(
                last.clone()
                    .ok_or_else(|| Error::UnreadableSource("ffmpeg produced no frames".into()))?,
            );
        }
        drop(stdout);
        let _ = child.kill();
        let _ = child.wait();
        Ok(out)
    }

    fn audio(&mut self) -> Result<Option<AudioTrack>> {
        let out = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(&self.path)
            .args(["-vn", "-ac", "1", "-ar", "16000", "-f", "s16le", "-"])
            .output()
            .map_err(|e| Error::UnreadableSource(format!("spawn ffmpeg: {e}")))?;
        if !out.status.success() || out.stdout.is_empty() {
            return Ok(None);
        }
        let samples: Vec<i16> = out
            .stdout
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        Ok(Some(AudioTrack {
            sample_rate: 16_000,
            samples: samples.into(),
            source_uri: self.info.source_uri.clone(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn y4m_444_decodes_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.y4m");
        let mut file = Vec::new();
        {
            let mut enc = y4m::encode(4, 2, y4m::Ratio::new(5, 1))
                .with_colorspace(y4m::Colorspace::C444)
                .write_header(&mut file)
                .unwrap();
            for luma in [16u8, 235] {
                let y = vec![luma; 8];
                let c = vec![128u8; 8];
                enc.write_frame(&y4m::Frame::new([&y, &c, &c], None)).unwrap();
            }
        }
        std::fs::write(&path, file).unwrap();
        let mut dec = open(path.to_str().unwrap()).unwrap();
        assert_eq!(dec.frame_count(), 2);
        assert!((dec.info().duration - 0.4).abs() < 1e-12);
        let frames = dec.frames(&[0, 1]).unwrap();
        assert_eq!(frames[0].pixel(0, 0), [0, 0, 0]);
        assert_eq!(frames[1].pixel(3, 1), [255, 255, 255]);
        assert!(dec.audio().unwrap().is_none());
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = open("/definitely/not/here.nfv").err().unwrap();
        assert_eq!(err.code(), "UNREADABLE_SOURCE");
    }
}
