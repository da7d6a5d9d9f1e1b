//! On-disk segment store.
//!
//! Each (source clip, augmentation method, resolution) gets one binary
//! tensor file: magic `MRT1`, little-endian u32 rank, u32 dims, then f32
//! cells row-major. A sidecar `index.csv` lists one row per segment with
//! columns `segment_path,source_path,class_label,location_id,
//! resolution_fft,offset_samples,augmentation`; rows sharing a
//! `segment_path` appear in the file's leading-dimension order.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DspError, MelSegment, ResolutionProfile, SegmentTuple};

pub const MRT1_MAGIC: &[u8; 4] = b"MRT1";
pub const INDEX_NAME: &str = "index.csv";
pub const INDEX_HEADER: &str =
    "segment_path,source_path,class_label,location_id,resolution_fft,offset_samples,augmentation";

/// Serialize a tensor in the MRT1 layout.
pub fn write_mrt1(out: &mut impl Write, dims: &[usize], cells: &[f32]) -> Result<(), DspError> {
    let expect: usize = dims.iter().product();
    assert_eq!(cells.len(), expect, "dims {dims:?} do not match cell count");
    out.write_all(MRT1_MAGIC)?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &c in cells {
        out.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

/// Deserialize an MRT1 tensor that fills the whole buffer.
pub fn read_mrt1(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>), DspError> {
    let mut pos = 0;
    let out = read_mrt1_at(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(DspError::Store(format!(
            "{} trailing bytes after tensor",
            bytes.len() - pos
        )));
    }
    Ok(out)
}

/// Deserialize one MRT1 tensor starting at `*pos`, advancing `*pos` past it.
/// Lets containers embed tensors back to back.
pub fn read_mrt1_at(bytes: &[u8], pos: &mut usize) -> Result<(Vec<usize>, Vec<f32>), DspError> {
    let at = *pos;
    if bytes.len() < at + 8 || &bytes[at..at + 4] != MRT1_MAGIC {
        return Err(DspError::Store("missing MRT1 magic".into()));
    }
    let rank = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()) as usize;
    let dims_end = at + 8 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(DspError::Store("truncated dim header".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let d = at + 8 + 4 * i;
        dims.push(u32::from_le_bytes(bytes[d..d + 4].try_into().unwrap()) as usize);
    }
    let count: usize = dims.iter().product();
    let data_end = dims_end + 4 * count;
    if bytes.len() < data_end {
        return Err(DspError::Store(format!(
            "expected {count} cells, only {} bytes of data remain",
            bytes.len() - dims_end
        )));
    }
    let cells = bytes[dims_end..data_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    *pos = data_end;
    Ok((dims, cells))
}

fn sanitize(s: &str) -> String {
    let stem = s.rsplit('/').next().unwrap_or(s);
    stem.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes segment tuples for a sequence of clips and the index that
/// describes them. Call [`SegmentStoreWriter::finish`] to flush the index.
pub struct SegmentStoreWriter {
    root: PathBuf,
    index_rows: Vec<String>,
    ordinal: usize,
}

impl SegmentStoreWriter {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, DspError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            index_rows: Vec::new(),
            ordinal: 0,
        })
    }

    /// Write all tuples extracted from one clip. Tuples must share the same
    /// provenance and resolution list.
    pub fn write_clip(&mut self, tuples: &[SegmentTuple]) -> Result<(), DspError> {
        if tuples.is_empty() {
            return Ok(());
        }
        let n_res = tuples[0].len();
        let ordinal = self.ordinal;
        self.ordinal += 1;
        for r in 0..n_res {
            let first = &tuples[0][r];
            let profile = first.profile;
            let name = format!(
                "{ordinal:04}_{}__{}__{}.mrt",
                sanitize(&first.source_path),
                first.augmentation,
                profile.fft_size
            );
            let dims = [
                tuples.len(),
                profile.mel_bands,
                profile.frames_per_segment,
            ];
            let mut cells = Vec::with_capacity(dims.iter().product());
            for tuple in tuples {
                cells.extend_from_slice(&tuple[r].values);
            }
            let mut file = BufWriter::new(std::fs::File::create(self.root.join(&name))?);
            write_mrt1(&mut file, &dims, &cells)?;
            file.flush()?;
            for tuple in tuples {
                let seg = &tuple[r];
                self.index_rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    name,
                    seg.source_path,
                    seg.class_label,
                    seg.location_id,
                    profile.fft_size,
                    seg.offset_samples,
                    seg.augmentation
                ));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), DspError> {
        let mut out = BufWriter::new(std::fs::File::create(self.root.join(INDEX_NAME))?);
        writeln!(out, "{INDEX_HEADER}")?;
        for row in &self.index_rows {
            writeln!(out, "{row}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Load every segment in a store. Segments come back grouped per tensor
/// file in index order.
pub fn load_store(root: impl AsRef<Path>, sample_rate: u32) -> Result<Vec<MelSegment>, DspError> {
    let root = root.as_ref();
    let index = std::fs::read_to_string(root.join(INDEX_NAME))?;
    let mut lines = index.lines();
    match lines.next() {
        Some(h) if h == INDEX_HEADER => {}
        other => {
            return Err(DspError::Store(format!(
                "bad index header: {other:?}"
            )))
        }
    }

    // group rows per tensor file, keeping first-seen order
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != 7 {
            return Err(DspError::Store(format!(
                "index row {} has {} fields",
                i + 2,
                fields.len()
            )));
        }
        if !grouped.contains_key(&fields[0]) {
            order.push(fields[0].clone());
        }
        grouped.entry(fields[0].clone()).or_default().push(fields);
    }

    let mut segments = Vec::new();
    for name in order {
        let rows = &grouped[&name];
        let bytes = std::fs::read(root.join(&name))?;
        let (dims, cells) = read_mrt1(&bytes)?;
        if dims.len() != 3 {
            return Err(DspError::Store(format!(
                "{name}: expected rank 3, found {}",
                dims.len()
            )));
        }
        let (n, bands, frames) = (dims[0], dims[1], dims[2]);
        if n != rows.len() {
            return Err(DspError::Store(format!(
                "{name}: {n} segments in tensor but {} index rows",
                rows.len()
            )));
        }
        let fft: usize = rows[0][4]
            .parse()
            .map_err(|_| DspError::Store(format!("{name}: bad resolution_fft")))?;
        let profile = ResolutionProfile::new(fft, sample_rate)?;
        let cell_count = bands * frames;
        for (i, row) in rows.iter().enumerate() {
            let offset: usize = row[5]
                .parse()
                .map_err(|_| DspError::Store(format!("{name}: bad offset_samples")))?;
            segments.push(MelSegment {
                values: cells[i * cell_count..(i + 1) * cell_count].to_vec(),
                profile,
                source_path: row[1].clone(),
                class_label: row[2].clone(),
                location_id: row[3].clone(),
                offset_samples: offset,
                augmentation: row[6].clone(),
            });
        }
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{FRAMES_PER_SEGMENT, MEL_BANDS};

    fn tuple(path: &str, fill: f32, offset: usize) -> SegmentTuple {
        [512usize, 1024]
            .iter()
            .map(|&fft| MelSegment {
                values: vec![fill; MEL_BANDS * FRAMES_PER_SEGMENT],
                profile: ResolutionProfile::new(fft, 44_100).unwrap(),
                source_path: path.to_string(),
                class_label: "beach".into(),
                location_id: "loc1".into(),
                offset_samples: offset,
                augmentation: "none".into(),
            })
            .collect()
    }

    #[test]
    fn mrt1_round_trip() {
        let dims = [2usize, 3, 4];
        let cells: Vec<f32> = (0..24).map(|i| i as f32 * 0.5).collect();
        let mut buf = Vec::new();
        write_mrt1(&mut buf, &dims, &cells).unwrap();
        assert_eq!(&buf[0..4], b"MRT1");
        let (rdims, rcells) = read_mrt1(&buf).unwrap();
        assert_eq!(rdims, dims);
        assert_eq!(rcells, cells);
    }

    #[test]
    fn store_round_trip_preserves_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let mut writer = SegmentStoreWriter::create(dir.path()).unwrap();
        writer
            .write_clip(&[tuple("a.wav", 1.0, 10), tuple("a.wav", 2.0, 20)])
            .unwrap();
        writer.write_clip(&[tuple("b.wav", 3.0, 30)]).unwrap();
        writer.finish().unwrap();

        let segments = load_store(dir.path(), 44_100).unwrap();
        // 2 clips x (2 + 1) tuples x 2 resolutions
        assert_eq!(segments.len(), 6);
        let a512: Vec<&MelSegment> = segments
            .iter()
            .filter(|s| s.source_path == "a.wav" && s.profile.fft_size == 512)
            .collect();
        assert_eq!(a512.len(), 2);
        assert_eq!(a512[0].offset_samples, 10);
        assert_eq!(a512[1].offset_samples, 20);
        assert!(a512[0].values.iter().all(|&v| v == 1.0));
        assert!(a512[1].values.iter().all(|&v| v == 2.0));
        assert_eq!(a512[0].class_label, "beach");
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut buf = Vec::new();
        write_mrt1(&mut buf, &[1], &[0.0]).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_mrt1(&buf), Err(DspError::Store(_))));
    }
}
