//! Minimal WAV reader/writer: PCM 16-bit and IEEE float32, little-endian,
//! mono or stereo. Anything else is rejected with a data error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path)?);
    let mut tag = [0u8; 4];
    r.read_exact(&mut tag)?;
    if &tag != b"RIFF" {
        return Err(Error::Data(format!("{}: not a RIFF file", path.display())));
    }
    r.read_u32::<LittleEndian>()?; // riff size
    r.read_exact(&mut tag)?;
    if &tag != b"WAVE" {
        return Err(Error::Data(format!("{}: not a WAVE file", path.display())));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<Vec<u8>> = None;
    loop {
        if r.read_exact(&mut tag).is_err() {
            break;
        }
        let size = r.read_u32::<LittleEndian>()? as usize;
        match &tag {
            b"fmt " => {
                let mut chunk = vec![0u8; size];
                r.read_exact(&mut chunk)?;
                if size < 16 {
                    return Err(Error::Data("malformed fmt chunk".into()));
                }
                let mut c = &chunk[..];
                let format = c.read_u16::<LittleEndian>()?;
                let channels = c.read_u16::<LittleEndian>()?;
                let rate = c.read_u32::<LittleEndian>()?;
                c.read_u32::<LittleEndian>()?; // byte rate
                c.read_u16::<LittleEndian>()?; // block align
                let bits = c.read_u16::<LittleEndian>()?;
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                let mut chunk = vec![0u8; size];
                r.read_exact(&mut chunk)?;
                data = Some(chunk);
            }
            _ => {
                // skip unknown chunk (word-aligned)
                let mut skip = vec![0u8; size + (size & 1)];
                r.read_exact(&mut skip)?;
            }
        }
        if fmt.is_some() && data.is_some() {
            break;
        }
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Data("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Data("missing data chunk".into()))?;
    if !(1..=2).contains(&channels) {
        return Err(Error::Data(format!("unsupported channel count {channels}")));
    }
    let nch = channels as usize;
    let interleaved: Vec<f64> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        _ => {
            return Err(Error::Data(format!(
                "unsupported WAV encoding: format tag {format}, {bits} bits (only PCM16 and float32 are supported)"
            )))
        }
    };
    let frames = interleaved.len() / nch;
    let mut chans = vec![Vec::with_capacity(frames); nch];
    for (i, v) in interleaved.iter().enumerate() {
        chans[i % nch].push(*v);
    }
    Waveform::new(chans, rate)
}

pub fn write_wav(path: &Path, wf: &Waveform, format: SampleFormat) -> Result<()> {
    let nch = wf.channels.len();
    let frames = wf.len();
    let (fmt_tag, bits): (u16, u16) = match format {
        SampleFormat::Pcm16 => (1, 16),
        SampleFormat::Float32 => (3, 32),
    };
    let bytes_per_sample = bits as usize / 8;
    let data_len = frames * nch * bytes_per_sample;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_u32::<LittleEndian>((36 + data_len) as u32)?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_u32::<LittleEndian>(16)?;
    w.write_u16::<LittleEndian>(fmt_tag)?;
    w.write_u16::<LittleEndian>(nch as u16)?;
    w.write_u32::<LittleEndian>(wf.sample_rate)?;
    w.write_u32::<LittleEndian>(wf.sample_rate * (nch * bytes_per_sample) as u32)?;
    w.write_u16::<LittleEndian>((nch * bytes_per_sample) as u16)?;
    w.write_u16::<LittleEndian>(bits)?;
    w.write_all(b"data")?;
    w.write_u32::<LittleEndian>(data_len as u32)?;
    for i in 0..frames {
        for ch in &wf.channels {
            match format {
                SampleFormat::Pcm16 => {
                    let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_i16::<LittleEndian>(v)?;
                }
                SampleFormat::Float32 => w.write_f32::<LittleEndian>(ch[i] as f32)?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float32_round_trip() {
        let dir = std::env::temp_dir().join("binaural_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.wav");
        let wf = Waveform::stereo(vec![0.1, -0.5, 1.2], vec![0.0, 0.25, -1.0], 16_000).unwrap();
        write_wav(&path, &wf, SampleFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.channels.len(), 2);
        for ch in 0..2 {
            for (a, b) in wf.channels[ch].iter().zip(&back.channels[ch]) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pcm16_round_trip_and_clamp() {
        let dir = std::env::temp_dir().join("binaural_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pcm.wav");
        let wf = Waveform::mono(vec![0.5, -0.5, 2.0], 8_000).unwrap();
        write_wav(&path, &wf, SampleFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert!((back.channels[0][0] - 0.5).abs() < 1e-4);
        assert!((back.channels[0][2] - 32767.0 / 32768.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_unsupported_encoding() {
        let dir = std::env::temp_dir().join("binaural_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.wav");
        // hand-build an 8-bit PCM file
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 2).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes()); // pcm
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes()); // 8 bits
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8, 0u8]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Data(_))));
    }
}
