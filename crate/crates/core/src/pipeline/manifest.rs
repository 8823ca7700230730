use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::ViewSet;
use crate::retrieval::GeoSample;
use crate::synthproxy::{canny, read_rgb, stack_4channel, to_grayscale, CannyParams};
use crate::Tensor;

pub const MANIFEST_HEADER: [&str; 6] = ["id", "ground", "aerial", "synth", "lat", "lon"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl Split {
    /// `test` when the file stem mentions it, `train` otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) if s.contains("test") => Split::Test,
            _ => Split::Train,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub ground: PathBuf,
    pub aerial: PathBuf,
    pub synth: Option<PathBuf>,
    /// `(latitude, longitude)` in degrees.
    pub geo: Option<(f64, f64)>,
}

/// One split of paired samples. Paths are absolute once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub rows: Vec<ManifestRow>,
}

fn opt(field: Option<&str>) -> Option<&str> {
    field.map(str::trim).filter(|s| !s.is_empty())
}

fn parse_coord(value: &str, what: &str, line: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("line {line}: {what} `{value}` is not a number")))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let header = reader.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != MANIFEST_HEADER {
        return Err(Error::Data(format!(
            "{}: header must be `{}`, got `{}`",
            path.display(),
            MANIFEST_HEADER.join(","),
            got.join(",")
        )));
    }

    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut rows = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::Data(format!(
                "line {line}: expected {} fields, got {}",
                MANIFEST_HEADER.len(),
                record.len()
            )));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty id")));
        }
        if let Some(prev) = first_line.insert(id.clone(), line) {
            return Err(Error::Data(format!("duplicate id `{id}` on lines {prev} and {line}")));
        }
        let (ground, aerial) = match (opt(record.get(1)), opt(record.get(2))) {
            (Some(g), Some(a)) => (resolve(g), resolve(a)),
            _ => return Err(Error::Data(format!("line {line}: ground and aerial paths are required"))),
        };
        let synth = opt(record.get(3)).map(resolve);
        let geo = match (opt(record.get(4)), opt(record.get(5))) {
            (None, None) => None,
            (Some(lat), Some(lon)) => {
                let g = GeoSample::new(&id, parse_coord(lat, "lat", line)?, parse_coord(lon, "lon", line)?)
                    .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
                Some((g.latitude, g.longitude))
            }
            _ => return Err(Error::Data(format!("line {line}: partial geo for `{id}`: lat and lon go together"))),
        };
        for p in [Some(&ground), Some(&aerial), synth.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Data(format!("line {line}: `{}` does not exist", p.display())));
            }
        }
        rows.push(ManifestRow { id, ground, aerial, synth, geo });
    }
    let with_geo = rows.iter().filter(|r| r.geo.is_some()).count();
    if with_geo != 0 && with_geo != rows.len() {
        return Err(Error::Data(format!(
            "partial geo coverage: {with_geo} of {} rows have coordinates",
            rows.len()
        )));
    }
    Ok(Manifest { split: Split::from_path(path), rows })
}

fn relative(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    pub fn has_synth(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.synth.is_some())
    }

    /// Writes the manifest with paths relative to the file's directory
    /// where possible.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let data_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(MANIFEST_HEADER).map_err(data_err)?;
        for r in &self.rows {
            let (lat, lon) = r.geo.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
            w.write_record([
                r.id.clone(),
                relative(&r.ground, base),
                relative(&r.aerial, base),
                r.synth.as_deref().map(|s| relative(s, base)).unwrap_or_default(),
                lat,
                lon,
            ])
            .map_err(data_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aerial-to-ground mode: the aerial image becomes the query view.
    /// Synthesized paths no longer describe the new reference view and
    /// are dropped.
    pub fn swap_views(&self) -> Self {
        Self {
            split: self.split,
            rows: self
                .rows
                .iter()
                .map(|r| ManifestRow {
                    id: r.id.clone(),
                    ground: r.aerial.clone(),
                    aerial: r.ground.clone(),
                    synth: None,
                    geo: r.geo,
                })
                .collect(),
        }
    }

    pub fn geo_samples(&self) -> HashMap<String, GeoSample> {
        self.rows
            .iter()
            .filter_map(|r| r.geo.map(|(lat, lon)| (r.id.clone(), GeoSample { id: r.id.clone(), latitude: lat, longitude: lon })))
            .collect()
    }

    /// Decodes every image into aligned N×C×H×W tensors, optionally with
    /// an edge-map channel appended.
    pub fn load_views(&self, edges: Option<&CannyParams>) -> Result<ViewSet<f64>> {
        if self.rows.is_empty() {
            return Err(Error::Data("manifest has no rows".into()));
        }
        let load = |p: &Path| -> Result<Tensor> {
            let rgb = read_rgb(p)?;
            match edges {
                Some(params) => {
                    let e = canny(&to_grayscale(&rgb)?, params)?;
                    stack_4channel(&rgb, &e)
                }
                None => Ok(rgb),
            }
        };
        let stack = |paths: Vec<&Path>| -> Result<Tensor> {
            let imgs: Vec<Tensor> = paths.par_iter().map(|p| load(p)).collect::<Result<_>>()?;
            let shape = imgs[0].shape().to_vec();
            if let Some((i, t)) = imgs.iter().enumerate().find(|(_, t)| t.shape() != shape.as_slice()) {
                return Err(Error::Data(format!(
                    "`{}` is {:?} but `{}` is {shape:?}",
                    paths[i].display(),
                    t.shape(),
                    paths[0].display()
                )));
            }
            let rows: Vec<Tensor> = imgs.into_iter().map(|t| t.reshape(&[1, shape[0], shape[1], shape[2]])).collect::<Result<_>>()?;
            Tensor::stack_rows(&rows)
        };
        let synth = if self.has_synth() {
            Some(stack(self.rows.iter().map(|r| r.synth.as_deref().unwrap()).collect())?)
        } else {
            None
        };
        Ok(ViewSet {
            ids: self.ids(),
            ground: stack(self.rows.iter().map(|r| r.ground.as_path()).collect())?,
            aerial: stack(self.rows.iter().map(|r| r.aerial.as_path()).collect())?,
            synth,
        })
    }
}

/// Reads a `query,gallery` CSV mapping each query id to its true reference.
pub fn load_ground_truth_map(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    };
    let mut reader = csv::Reader::from_path(path).map_err(err)?;
    let header: Vec<String> = reader.headers().map_err(err)?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["query", "gallery"] {
        return Err(Error::Data(format!("{}: header must be `query,gallery`", path.display())));
    }
    let mut map = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Data(format!("{}: line {line}: expected 2 fields", path.display())));
        }
        let (q, g) = (record[0].trim().to_string(), record[1].trim().to_string());
        if map.insert(q.clone(), g).is_some() {
            return Err(Error::Data(format!("{}: line {line}: query `{q}` mapped twice", path.display())));
        }
    }
    Ok(map)
}
