//! On-disk dataset layout.
//!
//! ```text
//! manifest.json   config echo, seed, N, policy, SHA-256 of every data file
//! curves.f64      N × 701 network inputs, little-endian binary64, row-major
//! images.f64      N × 701 label images
//! raw.f64         N × 21 full-line raw curves
//! labels.csv      index,count,permittivity,positions,scene_seed[,provenance]
//! split_<s>.json  train/val/test index arrays
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Dataset, DatasetConfig, DatasetError, DatasetSplit, GroundTruth, HybridStamp, PhysicsConfig, Provenance, Sample,
    SceneSpec, INPUT_LEN, RAW_LEN,
};

pub const FORMAT_VERSION: u32 = 1;
const CURVES: &str = "curves.f64";
const IMAGES: &str = "images.f64";
const RAW: &str = "raw.f64";
const LABELS: &str = "labels.csv";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub samples: usize,
    pub seed: u64,
    pub policy: String,
    pub physics: PhysicsConfig,
    pub config: DatasetConfig,
    /// File name → hex SHA-256.
    pub checksums: Vec<(String, String)>,
    pub hybrid: Option<HybridStamp>,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn f64_bytes<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<u8> {
    rows.flat_map(|r| r.iter().flat_map(|v| v.to_le_bytes())).collect()
}

fn parse_f64s(path: &Path, bytes: &[u8], n: usize, width: usize) -> Result<Vec<Vec<f64>>, DatasetError> {
    if bytes.len() != n * width * 8 {
        return Err(format_err(
            path,
            format!("expected {} bytes, found {}", n * width * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(width * 8)
        .map(|row| {
            row.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        })
        .collect())
}

fn labels_csv(ds: &Dataset) -> String {
    let with_prov = ds.samples.iter().any(|s| s.provenance != Provenance::Solver);
    let mut out = String::from("index,count,permittivity,positions,scene_seed");
    if with_prov {
        out.push_str(",provenance");
    }
    out.push('\n');
    for s in &ds.samples {
        let pos: Vec<String> = s.spec.positions.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}",
            s.index,
            s.spec.count,
            s.spec.permittivity,
            pos.join(";"),
            s.scene_seed
        ));
        if with_prov {
            out.push_str(match s.provenance {
                Provenance::Solver => ",solver",
                Provenance::Surrogate => ",surrogate",
            });
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files: Vec<(&str, Vec<u8>)> = vec![
        (CURVES, f64_bytes(ds.samples.iter().map(|s| s.curve.as_slice()))),
        (IMAGES, f64_bytes(ds.samples.iter().map(|s| s.truth.image.as_slice()))),
        (RAW, f64_bytes(ds.samples.iter().map(|s| s.raw.as_slice()))),
        (LABELS, labels_csv(ds).into_bytes()),
    ];
    let mut checksums = Vec::new();
    for (name, bytes) in &files {
        write_file(&dir.join(name), bytes)?;
        checksums.push((name.to_string(), sha256_hex(bytes)));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        samples: ds.len(),
        seed: ds.config.seed,
        policy: ds.config.policy.id(),
        physics: ds.physics.clone(),
        config: ds.config.clone(),
        checksums,
        hybrid: ds.hybrid.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_file(&dir.join(MANIFEST), json.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(format_err(
            &path,
            format!("unsupported format version {}", m.format_version),
        ));
    }
    Ok(m)
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>, DatasetError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let expected = manifest
        .checksums
        .iter()
        .find(|(n, _)| n == name)
        .ok_or_else(|| format_err(&path, "no checksum in manifest"))?;
    if sha256_hex(&bytes) != expected.1 {
        return Err(DatasetError::Checksum(path.display().to_string()));
    }
    Ok(bytes)
}

struct LabelRow {
    index: usize,
    spec: SceneSpec,
    scene_seed: u64,
    provenance: Provenance,
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<LabelRow>, DatasetError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err(path, "empty labels file"))?;
    let with_prov = header.ends_with(",provenance");
    lines
        .enumerate()
        .map(|(row, line)| {
            let bad = |what: &str| format_err(path, format!("row {}: bad {what}", row + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 + with_prov as usize {
                return Err(bad("column count"));
            }
            let positions = cols[3]
                .split(';')
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("positions"))?;
            let provenance = match cols.get(5) {
                None | Some(&"solver") => Provenance::Solver,
                Some(&"surrogate") => Provenance::Surrogate,
                Some(_) => return Err(bad("provenance")),
            };
            Ok(LabelRow {
                index: cols[0].parse().map_err(|_| bad("index"))?,
                spec: SceneSpec {
                    count: cols[1].parse().map_err(|_| bad("count"))?,
                    positions,
                    permittivity: cols[2].parse().map_err(|_| bad("permittivity"))?,
                },
                scene_seed: cols[4].parse().map_err(|_| bad("scene seed"))?,
                provenance,
            })
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let n = manifest.samples;
    let curves = parse_f64s(&dir.join(CURVES), &read_checked(dir, CURVES, &manifest)?, n, INPUT_LEN)?;
    let images = parse_f64s(&dir.join(IMAGES), &read_checked(dir, IMAGES, &manifest)?, n, INPUT_LEN)?;
    let raws = parse_f64s(&dir.join(RAW), &read_checked(dir, RAW, &manifest)?, n, RAW_LEN)?;
    let labels_path = dir.join(LABELS);
    let labels_text =
        String::from_utf8(read_checked(dir, LABELS, &manifest)?).map_err(|_| format_err(&labels_path, "not UTF-8"))?;
    let labels = parse_labels(&labels_path, &labels_text)?;
    if labels.len() != n {
        return Err(format_err(
            &labels_path,
            format!("{} rows for {n} samples", labels.len()),
        ));
    }
    let samples = labels
        .into_iter()
        .zip(curves.into_iter().zip(images).zip(raws))
        .map(|(row, ((curve, image), raw))| {
            row.spec.validate()?;
            Ok(Sample {
                index: row.index,
                scene_seed: row.scene_seed,
                truth: GroundTruth {
                    quantity: row.spec.one_hot(),
                    permittivity: row.spec.permittivity as f64,
                    image,
                },
                spec: row.spec,
                raw,
                curve,
                provenance: row.provenance,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(Dataset {
        physics: manifest.physics,
        config: manifest.config,
        samples,
        hybrid: manifest.hybrid,
    })
}

pub fn save_split(split: &DatasetSplit, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let json = serde_json::to_string(split).expect("split serialises");
    write_file(&dir.join(split.file_name()), json.as_bytes())
}

pub fn load_split(dir: &Path, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let path = dir.join(format!("split_{seed}.json"));
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}
