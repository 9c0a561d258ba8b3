//! Identity-labelled feature datasets: synthetic generation, open-set
//! train/query/gallery splitting and CSV / portable-pixmap persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::descriptor::Image;
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// One descriptor together with its identity and camera labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub id: u32,
    pub camera: u32,
    pub vector: Vec<f64>,
}

/// An immutable collection of equally sized, finite feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    records: Vec<LabeledFeature>,
    dim: usize,
    num_identities: usize,
}

impl FeatureDataset {
    pub fn new(records: Vec<LabeledFeature>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::EmptyDataset("dataset has no records".into()))?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(Error::Dataset("feature dimensionality must be at least 1".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::Dataset(format!(
                    "record {i} has dimensionality {} but the dataset has {dim}",
                    r.vector.len()
                )));
            }
            if let Some(j) = r.vector.iter().position(|x| !x.is_finite()) {
                return Err(Error::Dataset(format!("record {i} has a non-finite value at f{j}")));
            }
        }
        let num_identities = records.iter().map(|r| r.id).collect::<BTreeSet<_>>().len();
        Ok(Self {
            records,
            dim,
            num_identities,
        })
    }

    pub fn records(&self) -> &[LabeledFeature] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledFeature> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_identities(&self) -> usize {
        self.num_identities
    }

    pub fn ids(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.id).collect()
    }

    pub fn cameras(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.camera).collect()
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.vector.as_slice()).collect()
    }

    /// Row-per-record matrix of the feature vectors.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |r, c| self.records[r].vector[c])
    }

    /// Record count per identity, keyed by identity.
    pub fn identity_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.id).or_insert(0) += 1;
        }
        counts
    }

    /// Fails unless every identity has at least `min` records.
    pub fn require_records_per_identity(&self, min: usize) -> Result<()> {
        let short: Vec<u32> = self
            .identity_counts()
            .into_iter()
            .filter(|&(_, n)| n < min)
            .map(|(id, _)| id)
            .collect();
        if short.is_empty() {
            Ok(())
        } else {
            Err(Error::Split {
                identities: short,
                required: min,
            })
        }
    }

    /// Dense class indices `0..C` (identities in ascending order) for each
    /// record, plus the identity belonging to each class.
    pub fn class_labels(&self) -> (Vec<usize>, Vec<u32>) {
        let classes: Vec<u32> = self.identity_counts().into_keys().collect();
        let index: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        (self.records.iter().map(|r| index[&r.id]).collect(), classes)
    }

    /// Replaces every vector through `f`, keeping the labels.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(LabeledFeature {
                    id: r.id,
                    camera: r.camera,
                    vector: f(&r.vector)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }
}

/// Parameters of the Gaussian identity/camera generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_identities: usize,
    pub records_per_identity: usize,
    pub num_cameras: usize,
    pub dim: usize,
    pub intra_class_stddev: f64,
    pub camera_shift_stddev: f64,
    pub class_center_stddev: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_identities: 40,
            records_per_identity: 12,
            num_cameras: 4,
            dim: 32,
            intra_class_stddev: 0.6,
            camera_shift_stddev: 1.0,
            class_center_stddev: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.num_identities >= 2, "num_identities >= 2"),
            (self.records_per_identity >= 2, "records_per_identity >= 2"),
            (self.num_cameras >= 2, "num_cameras >= 2"),
            (self.dim >= 2, "dim >= 2"),
            (
                self.intra_class_stddev.is_finite() && self.intra_class_stddev > 0.0,
                "intra_class_stddev > 0",
            ),
            (
                self.camera_shift_stddev.is_finite() && self.camera_shift_stddev >= 0.0,
                "camera_shift_stddev >= 0",
            ),
            (
                self.class_center_stddev.is_finite() && self.class_center_stddev > 0.0,
                "class_center_stddev > 0",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, bound)) => Err(Error::Config(format!("synthetic spec violates {bound}"))),
            None => Ok(()),
        }
    }

    /// Camera that sees the `record`-th record of identity `identity`.
    fn camera_of(&self, identity: usize, record: usize) -> u32 {
        ((identity + record) % self.num_cameras) as u32
    }
}

fn gaussian_vectors(rng: &mut impl Rng, count: usize, dim: usize, stddev: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    stddev * z
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

/// Draws `center(id) + offset(camera) + noise` for every record.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<FeatureDataset> {
    spec.validate()?;
    let centers = gaussian_vectors(
        &mut seeded(seed, stream::CENTERS),
        spec.num_identities,
        spec.dim,
        spec.class_center_stddev,
    );
    let offsets = gaussian_vectors(
        &mut seeded(seed, stream::CAMERAS),
        spec.num_cameras,
        spec.dim,
        spec.camera_shift_stddev,
    );
    let mut noise = seeded(seed, stream::NOISE);
    let mut records = Vec::with_capacity(spec.num_identities * spec.records_per_identity);
    for (identity, center) in centers.iter().enumerate() {
        for r in 0..spec.records_per_identity {
            let camera = spec.camera_of(identity, r);
            let offset = &offsets[camera as usize];
            let vector = (0..spec.dim)
                .map(|k| {
                    let eps: f64 = StandardNormal.sample(&mut noise);
                    center[k] + offset[k] + spec.intra_class_stddev * eps
                })
                .collect();
            records.push(LabeledFeature {
                id: identity as u32,
                camera,
                vector,
            });
        }
    }
    FeatureDataset::new(records)
}

/// A synthetic person crop together with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: u32,
    pub camera: u32,
    /// Index of this record among the records of its identity.
    pub index: u32,
    pub image: Image,
}

impl LabeledImage {
    pub fn file_name(&self) -> String {
        format!("{:04}_{:02}_{:04}.ppm", self.id, self.camera, self.index)
    }
}

const MIN_IMAGE_SIDE: usize = 8;
const BACKGROUND: [f64; 3] = [0.45, 0.45, 0.45];
const SKIN: [f64; 3] = [0.85, 0.65, 0.55];

/// Renders one crop per record of [`generate_synthetic`]'s label layout.
///
/// Each identity wears a fixed (torso, legs) colour pair; each camera adds a
/// global brightness offset drawn with `camera_shift_stddev`; each pixel gets
/// noise drawn with `intra_class_stddev`. Both deviations are fractions of
/// the channel range. `class_center_stddev` does not apply to images.
pub fn generate_synthetic_images(
    spec: &SyntheticSpec,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
        return Err(Error::Config(format!(
            "image size {height}x{width} is below the {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} minimum"
        )));
    }
    let mut colors_rng = seeded(seed, stream::COLORS);
    let outfits: Vec<[[f64; 3]; 2]> = (0..spec.num_identities)
        .map(|_| {
            let mut pick = || [0; 3].map(|_: i32| colors_rng.random_range(0.05..0.95));
            [pick(), pick()]
        })
        .collect();
    let brightness = Normal::new(0.0, spec.camera_shift_stddev).map_err(|e| Error::Config(e.to_string()))?;
    let mut cam_rng = seeded(seed, stream::CAMERAS);
    let offsets: Vec<f64> = (0..spec.num_cameras).map(|_| brightness.sample(&mut cam_rng)).collect();

    let mut noise = seeded(seed, stream::NOISE);
    let head_end = height / 8;
    let torso_end = height / 2;
    let (left, right) = (width / 4, width - width / 4);
    let mut out = Vec::with_capacity(spec.num_identities * spec.records_per_identity);
    for (identity, outfit) in outfits.iter().enumerate() {
        for r in 0..spec.records_per_identity {
            let camera = spec.camera_of(identity, r);
            let shift = offsets[camera as usize];
            let mut pixels = Vec::with_capacity(height * width);
            for y in 0..height {
                for x in 0..width {
                    let base = if x < left || x >= right {
                        BACKGROUND
                    } else if y < head_end {
                        SKIN
                    } else if y < torso_end {
                        outfit[0]
                    } else {
                        outfit[1]
                    };
                    let px = base.map(|c| {
                        let eps: f64 = StandardNormal.sample(&mut noise);
                        let v = (c + shift + spec.intra_class_stddev * eps) * 255.0;
                        v.round().clamp(0.0, 255.0) as u8
                    });
                    pixels.push(px);
                }
            }
            out.push(LabeledImage {
                id: identity as u32,
                camera,
                index: r as u32,
                image: Image::new(height, width, pixels)?,
            });
        }
    }
    Ok(out)
}

/// Fraction of identities used for training and number of queries per test
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction_of_identities: f64,
    pub queries_per_test_identity: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction_of_identities: 0.5,
            queries_per_test_identity: 2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = self.train_fraction_of_identities;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction_of_identities must lie in (0, 1), got {f}"
            )));
        }
        if self.queries_per_test_identity == 0 {
            return Err(Error::Config("queries_per_test_identity must be at least 1".into()));
        }
        Ok(())
    }
}

/// The three disjoint parts of an open-set re-identification split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: FeatureDataset,
    pub query: FeatureDataset,
    pub gallery: FeatureDataset,
}

/// Splits by identity: train identities never appear in query or gallery.
///
/// The number of train identities is `round(fraction · C)` clamped to
/// `[1, C − 1]`. Within each split, records keep their input order.
pub fn split_train_query_gallery(ds: &FeatureDataset, split: &SplitSpec, seed: u64) -> Result<Split> {
    split.validate()?;
    let counts = ds.identity_counts();
    let mut identities: Vec<u32> = counts.keys().copied().collect();
    if identities.len() < 2 {
        return Err(Error::Config("splitting needs at least two identities".into()));
    }
    let mut rng = seeded(seed, stream::SPLIT);
    identities.shuffle(&mut rng);
    let n = identities.len();
    let n_train = ((split.train_fraction_of_identities * n as f64).round() as usize).clamp(1, n - 1);
    let train_ids: BTreeSet<u32> = identities[..n_train].iter().copied().collect();
    let test_ids: BTreeSet<u32> = identities[n_train..].iter().copied().collect();

    let q = split.queries_per_test_identity;
    let short: Vec<u32> = test_ids.iter().copied().filter(|id| counts[id] < q + 1).collect();
    if !short.is_empty() {
        return Err(Error::Split {
            identities: short,
            required: q + 1,
        });
    }

    // Pick query positions per test identity by shuffling its record indices.
    let mut is_query = vec![false; ds.len()];
    for &id in &test_ids {
        let mut positions: Vec<usize> = ds
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.id == id)
            .map(|(i, _)| i)
            .collect();
        positions.shuffle(&mut rng);
        for &p in &positions[..q] {
            is_query[p] = true;
        }
    }

    let (mut train, mut query, mut gallery) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in ds.records().iter().enumerate() {
        if train_ids.contains(&r.id) {
            train.push(r.clone());
        } else if is_query[i] {
            query.push(r.clone());
        } else {
            gallery.push(r.clone());
        }
    }
    Ok(Split {
        train: FeatureDataset::new(train)?,
        query: FeatureDataset::new(query)?,
        gallery: FeatureDataset::new(gallery)?,
    })
}

/// Writes the feature CSV: header `id,camera,f0,…`, shortest round-trip
/// decimal representation, LF line endings.
pub fn save_csv(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "id,camera")?;
        for k in 0..ds.dim() {
            write!(w, ",f{k}")?;
        }
        writeln!(w)?;
        for r in ds.records() {
            write!(w, "{},{}", r.id, r.camera)?;
            for v in &r.vector {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: &Path) -> Result<FeatureDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "camera" {
        return Err(parse_err(1, "header must be `id,camera,f0,...`".into()));
    }
    let dim = header.len() - 2;
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{k}") {
            return Err(parse_err(1, format!("expected column `f{k}`, found `{name}`")));
        }
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} values, found {}", dim + 2, row.len()),
            ));
        }
        let label = |i: usize, name: &str| {
            row[i]
                .trim()
                .parse::<u32>()
                .map_err(|e| parse_err(line, format!("bad {name} `{}`: {e}", &row[i])))
        };
        let id = label(0, "id")?;
        let camera = label(1, "camera")?;
        let vector = (0..dim)
            .map(|k| {
                let field = row[k + 2].trim();
                let v: f64 = field
                    .parse()
                    .map_err(|e| parse_err(line, format!("bad value `{field}` in f{k}: {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("non-finite value `{field}` in f{k}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(LabeledFeature { id, camera, vector });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!("{} contains no records", path.display())));
    }
    FeatureDataset::new(records)
}

/// Writes an 8-bit binary portable pixmap (P6).
pub fn write_ppm(image: &Image, path: &Path) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(image.pixels().iter().flatten());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: message.to_string(),
    };
    // Header: magic, width, height, maxval, separated by whitespace/comments.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("not a binary pixmap (P6)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != width * height * 3 {
        return Err(bad("pixel data length does not match the header"));
    }
    let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Image::new(height, width, pixels)
}

/// Writes one pixmap per image plus `manifest.csv` (`filename,id,camera`).
pub fn save_image_corpus(images: &[LabeledImage], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("filename,id,camera\n");
    for li in images {
        let name = li.file_name();
        write_ppm(&li.image, &dir.join(&name))?;
        manifest.push_str(&format!("{name},{},{}\n", li.id, li.camera));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load_image_corpus(dir: &Path) -> Result<Vec<LabeledImage>> {
    let path = dir.join("manifest.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::Parse {
            path: path.clone(),
            line: 1,
            message: format!("{other:?}"),
        },
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<(String, u32, u32)>() {
        let (filename, id, camera) = row.map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let index = filename
            .trim_end_matches(".ppm")
            .rsplit('_')
            .next()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        out.push(LabeledImage {
            id,
            camera,
            index,
            image: read_ppm(&dir.join(&filename))?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!("{} lists no images", path.display())));
    }
    Ok(out)
}
