//! Binary feature files and plain-text frame-label files.
//!
//! Feature file layout (little-endian):
//! bytes 0-3 magic `MMFE`, 4-7 version u32 (= 1), 8 modality code u8
//! (0 vit, 1 resnet, 2 audio, 3 text), 9-12 frame count T u32,
//! 13-16 dim D u32, then T·D IEEE-754 f32 values row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DimRegistry, FeatureSequence, Modality};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"MMFE";
pub const FEATURE_VERSION: u32 = 1;

pub fn write_feature_file(seq: &FeatureSequence, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(17 + seq.data.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.push(seq.modality.code());
    buf.extend_from_slice(&(seq.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    for v in &seq.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path, registry: &DimRegistry) -> Result<FeatureSequence> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 17 {
        return Err(Error::Corrupt(format!(
            "{}: header needs 17 bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            &bytes[0..4],
            FEATURE_MAGIC
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let modality = Modality::from_code(bytes[8])?;
    let frames = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let expected_len = 17 + frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Corrupt(format!("{}: absurd dimensions", path.display())))?;
    if bytes.len() != expected_len {
        return Err(Error::Corrupt(format!(
            "{}: payload should be {} bytes, file has {}",
            path.display(),
            expected_len,
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[17..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let seq = FeatureSequence::new(modality, frames, dim, data)?;
    seq.check_registry(registry)?;
    Ok(seq)
}

/// One class index per line, one line per frame.
pub fn write_frame_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut body = String::new();
    for l in labels {
        body.push_str(&l.to_string());
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_frame_labels(path: &Path) -> Result<Vec<usize>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim().parse::<usize>().map_err(|_| {
                Error::Corrupt(format!(
                    "{}: line {} is not a class index: '{}'",
                    path.display(),
                    i + 1,
                    line
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tiny_registry() -> DimRegistry {
        DimRegistry {
            vit: 1,
            resnet: 1,
            audio: 1,
            text: 1,
        }
    }

    #[test]
    fn minimal_file_is_21_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.mmfe");
        let seq = FeatureSequence::new(Modality::Vit, 1, 1, vec![0.0]).unwrap();
        write_feature_file(&seq, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 21);
        let back = read_feature_file(&path, &tiny_registry()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mmfe");
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&[0u8; 17]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_feature_file(&path, &DimRegistry::default()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn registry_violation_is_a_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vit512.mmfe");
        let seq = FeatureSequence::new(Modality::Vit, 2, 512, vec![0.0; 1024]).unwrap();
        write_feature_file(&seq, &path).unwrap();
        let err = read_feature_file(&path, &DimRegistry::default()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err:?}");
    }

    #[test]
    fn truncated_payload_is_a_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.mmfe");
        let seq = FeatureSequence::new(Modality::Audio, 4, 1, vec![1.0; 4]).unwrap();
        write_feature_file(&seq, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_feature_file(&path, &tiny_registry()),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn frame_label_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let labels = vec![0usize, 3, 6, 2];
        write_frame_labels(&labels, &path).unwrap();
        assert_eq!(read_frame_labels(&path).unwrap(), labels);
    }
}
