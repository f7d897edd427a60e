//! Directory layouts for reduction bundles and boundary trace sets.
//!
//! A bundle directory holds `meta.json` plus `sharp_NNN.lfld`, `flat_NNN.lfld`
//! and `star_NNN.lfld` per solution. A trace directory holds `trace_NNN.lfld`
//! files and a `labels.json` list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::forward::BoundaryData;
use crate::grid::Field;
use crate::lfld;
use crate::reduction::{ReductionBundle, Variant};

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    variant: String,
    dim: usize,
    labels: Vec<String>,
}

fn numbered(dir: &Path, stem: &str, i: usize) -> PathBuf {
    dir.join(format!("{stem}_{i:03}.lfld"))
}

/// Contents of a bundle's `meta.json`.
pub fn bundle_meta(b: &ReductionBundle) -> Result<Vec<u8>> {
    let meta = BundleMeta { variant: b.variant.name().to_string(), dim: b.dim, labels: b.source_labels.clone() };
    Ok(serde_json::to_vec_pretty(&meta)?)
}

pub fn write_bundle(dir: impl AsRef<Path>, b: &ReductionBundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for j in 0..b.len() {
        lfld::write(numbered(dir, "sharp", j), &b.sharp[j])?;
        lfld::write(numbered(dir, "flat", j), &b.flat[j])?;
        lfld::write(numbered(dir, "star", j), &b.star[j])?;
    }
    fs::write(dir.join("meta.json"), bundle_meta(b)?)?;
    Ok(())
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<ReductionBundle> {
    let dir = dir.as_ref();
    let meta: BundleMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let variant: Variant = meta.variant.parse()?;
    let mut b = ReductionBundle { variant, dim: meta.dim, sharp: vec![], flat: vec![], star: vec![], source_labels: meta.labels };
    for j in 0..b.source_labels.len() {
        b.sharp.push(lfld::read(numbered(dir, "sharp", j))?);
        b.flat.push(lfld::read(numbered(dir, "flat", j))?);
        b.star.push(lfld::read(numbered(dir, "star", j))?);
    }
    if b.is_empty() {
        return Err(contract("empty bundle"));
    }
    let g = *b.grid();
    for f in b.sharp.iter().chain(&b.flat).chain(&b.star) {
        g.check_same(f.grid())?;
    }
    Ok(b)
}

pub fn write_traces(dir: impl AsRef<Path>, data: &[BoundaryData]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (j, d) in data.iter().enumerate() {
        lfld::write(numbered(dir, "trace", j), d.values())?;
    }
    let labels: Vec<&str> = data.iter().map(|d| d.label.as_str()).collect();
    fs::write(dir.join("labels.json"), serde_json::to_vec_pretty(&labels)?)?;
    Ok(())
}

/// Every `*.lfld` file in `dir` in name order, as boundary data. Labels come
/// from `labels.json` when present, else from the file stems.
pub fn read_traces(dir: impl AsRef<Path>) -> Result<Vec<BoundaryData>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "lfld"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .lfld traces in {}", dir.display())));
    }
    let labels: Option<Vec<String>> = fs::read(dir.join("labels.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    paths
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let f: Field = lfld::read(p)?;
            let label = match &labels {
                Some(l) if l.len() == paths.len() => l[j].clone(),
                _ => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            };
            BoundaryData::from_field(&f, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Rank};
    use crate::reduction::reduce_lambda;

    #[test]
    fn bundle_round_trip() {
        let g = Grid::unit_box(2, 9).unwrap();
        let us: Vec<Field> = (0..4)
            .map(|j| Field::from_fn(g, Rank::Vector(2), |x, o| {
                o[0] = (x[0] * (j + 1) as f64).sin();
                o[1] = x[1] * x[0] * j as f64;
            }))
            .collect();
        let b = reduce_lambda(&us, &["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), b);
    }

    #[test]
    fn trace_round_trip() {
        let g = Grid::unit_box(2, 7).unwrap();
        let data = vec![
            BoundaryData::from_fn(g, "x", |x, o| o.copy_from_slice(&[x[0], 0.0])),
            BoundaryData::from_fn(g, "y", |x, o| o.copy_from_slice(&[0.0, x[1] * x[1]])),
        ];
        let dir = tempfile::tempdir().unwrap();
        write_traces(dir.path(), &data).unwrap();
        assert_eq!(read_traces(dir.path()).unwrap(), data);
    }
}
