//! `NFV1` lossless clip container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NFV1"
//! u32 width, u32 height, u32 fps_num, u32 fps_den, u32 frame_count
//! u32 audio_rate (0 = no audio stream), u32 audio_samples
//! u16 title_len, title bytes (UTF-8)
//! frame_count x { u32 len, zlib(width*height*3 RGB bytes) }
//! if audio_rate > 0: u32 len, zlib(audio_samples x i16 mono PCM)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::media::Raster;

pub const MAGIC: &[u8; 4] = b"NFV1";

/// In-memory clip ready to be written as `NFV1`.
#[derive(Debug, Clone)]
pub struct Clip {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub title: String,
    pub frames: Vec<Raster>,
    /// `None` writes a file with no audio stream. `Some` with an empty vector
    /// writes a zero-length stream.
    pub audio: Option<(u32, Vec<i16>)>,
}

impl Clip {
    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(Error::InvalidArgument("frame rate must be positive".into()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.width, self.height, self.fps_num, self.fps_den, self.frames.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (rate, samples) = match &self.audio {
            Some((rate, s)) => (*rate, s.len() as u32),
            None => (0, 0),
        };
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&samples.to_le_bytes());
        let title = self.title.as_bytes();
        let title_len = u16::try_from(title.len())
            .map_err(|_| Error::InvalidArgument("title longer than 65535 bytes".into()))?;
        out.extend_from_slice(&title_len.to_le_bytes());
        out.extend_from_slice(title);
        for frame in &self.frames {
            if frame.width() != self.width || frame.height() != self.height {
                return Err(Error::InvalidArgument(format!(
                    "frame {}x{} does not match clip {}x{}",
                    frame.width(),
                    frame.height(),
                    self.width,
                    self.height
                )));
            }
            write_block(&mut out, frame.bytes())?;
        }
        if let Some((rate, pcm)) = &self.audio {
            if *rate > 0 {
                let bytes: Vec<u8> = pcm.iter().flat_map(|s| s.to_le_bytes()).collect();
                write_block(&mut out, &bytes)?;
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }
}

fn write_block(out: &mut Vec<u8>, raw: &[u8]) -> Result<()> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
    enc.write_all(raw)?;
    let packed = enc.finish()?;
    out.extend_from_slice(&(packed.len() as u32).to_le_bytes());
    out.extend_from_slice(&packed);
    Ok(())
}

/// Parsed header plus byte ranges of the compressed blocks.
pub struct NfvFile {
    bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub title: String,
    pub audio_rate: u32,
    pub audio_samples: u32,
    frame_blocks: Vec<(usize, usize)>,
    audio_block: Option<(usize, usize)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::UnreadableSource("truncated NFV1 stream".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<(usize, usize)> {
        let len = self.u32()? as usize;
        let start = self.pos;
        self.take(len)?;
        Ok((start, len))
    }
}

impl NfvFile {
    pub fn parse(bytes: Vec<u8>) -> Result<Self> {
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::UnreadableSource("missing NFV1 magic".into()));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let fps_num = r.u32()?;
        let fps_den = r.u32()?;
        let frame_count = r.u32()? as usize;
        let audio_rate = r.u32()?;
        let audio_samples = r.u32()?;
        let title_len = r.u16()? as usize;
        let title = String::from_utf8(r.take(title_len)?.to_vec())
            .map_err(|_| Error::UnreadableSource("title is not UTF-8".into()))?;
        if width == 0 || height == 0 {
            return Err(Error::UnreadableSource("zero frame dimensions".into()));
        }
        if fps_num == 0 || fps_den == 0 {
            return Err(Error::UnreadableSource("zero frame rate".into()));
        }
        let mut frame_blocks = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            frame_blocks.push(r.block()?);
        }
        let audio_block = if audio_rate > 0 { Some(r.block()?) } else { None };
        Ok(Self {
            width,
            height,
            fps_num,
            fps_den,
            title,
            audio_rate,
            audio_samples,
            frame_blocks,
            audio_block,
            bytes,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_blocks.len()
    }

    fn inflate(&self, (start, len): (usize, usize), expected: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(expected);
        ZlibDecoder::new(&self.bytes[start..start + len])
            .read_to_end(&mut out)
            .map_err(|e| Error::UnreadableSource(format!("corrupt NFV1 block: {e}")))?;
        if out.len() != expected {
            return Err(Error::UnreadableSource(format!(
                "NFV1 block holds {} bytes, expected {expected}",
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn frame(&self, index: usize) -> Result<Raster> {
        let block = *self
            .frame_blocks
            .get(index)
            .ok_or_else(|| Error::UnreadableSource(format!("frame {index} out of range")))?;
        let px = self.inflate(block, self.width as usize * self.height as usize * 3)?;
        Raster::new(self.width, self.height, px)
    }

    /// Mono PCM samples; `None` when the file has no audio stream.
    pub fn audio(&self) -> Result<Option<Vec<i16>>> {
        let Some(block) = self.audio_block else {
            return Ok(None);
        };
        let raw = self.inflate(block, self.audio_samples as usize * 2)?;
        Ok(Some(
            raw.chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]))
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(audio: Option<(u32, Vec<i16>)>) -> Clip {
        Clip {
            width: 4,
            height: 2,
            fps_num: 10,
            fps_den: 1,
            title: "t".into(),
            frames: (0..3).map(|i| Raster::solid(4, 2, [i * 50, 0, 0])).collect(),
            audio,
        }
    }

    #[test]
    fn encode_parse_round_trip() {
        let c = clip(Some((8000, vec![1, -2, 3])));
        let f = NfvFile::parse(c.encode().unwrap()).unwrap();
        assert_eq!(f.frame_count(), 3);
        assert_eq!(f.title, "t");
        assert_eq!(f.frame(2).unwrap(), c.frames[2]);
        assert_eq!(f.audio().unwrap(), Some(vec![1, -2, 3]));
    }

    #[test]
    fn no_audio_stream() {
        let f = NfvFile::parse(clip(None).encode().unwrap()).unwrap();
        assert_eq!(f.audio().unwrap(), None);
    }

    #[test]
    fn truncated_input_is_unreadable() {
        let mut bytes = clip(None).encode().unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(NfvFile::parse(bytes), Err(Error::UnreadableSource(_))));
        assert!(matches!(
            NfvFile::parse(b"GARBAGE!".to_vec()),
            Err(Error::UnreadableSource(_))
        ));
    }
}
