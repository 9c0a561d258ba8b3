//! Retrieval evaluation: per-query gallery ranking, CMC rank-k accuracy and
//! mean average precision under the cross-camera protocol.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, LabeledFeature};
use crate::linalg::quadratic_form;
use crate::metric::{squared_euclidean, MahalanobisModel, XqdaModel};
use crate::{Error, Result};

/// Distance used to rank the gallery. Every variant is a squared form, so
/// Euclidean and identity-Mahalanobis rankings agree exactly.
#[derive(Debug, Clone, Copy)]
pub enum Distance<'a> {
    Euclidean,
    Mahalanobis(&'a MahalanobisModel),
    Xqda(&'a XqdaModel),
}

impl Distance<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Mahalanobis(_) => "mahalanobis",
            Distance::Xqda(_) => "xqda",
        }
    }

    /// Maps a raw vector to the space where [`Distance::compare`] applies.
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Distance::Euclidean => Ok(x.to_vec()),
            Distance::Mahalanobis(m) => {
                if x.len() != m.dim() {
                    return Err(Error::shape(m.dim(), x.len()));
                }
                Ok(x.to_vec())
            }
            Distance::Xqda(m) => m.project(x),
        }
    }

    fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Distance::Euclidean => squared_euclidean(a, b),
            Distance::Mahalanobis(m) => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                Ok(quadratic_form(m.matrix(), &d).max(0.0))
            }
            Distance::Xqda(m) => m.projected_distance(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProtocolConfig<'a> {
    /// Drop gallery records sharing both identity and camera with the query.
    pub exclude_same_camera_positives: bool,
    pub distance: Distance<'a>,
}

impl Default for ProtocolConfig<'_> {
    fn default() -> Self {
        Self {
            exclude_same_camera_positives: true,
            distance: Distance::Euclidean,
        }
    }
}

/// Gallery order for one query, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: u32,
    pub query_camera: u32,
    pub gallery_indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub relevant: Vec<bool>,
}

impl RankedList {
    /// 1-based rank of the first relevant entry.
    pub fn first_hit(&self) -> Option<usize> {
        self.relevant.iter().position(|&r| r).map(|p| p + 1)
    }
}

fn rank_embedded(
    query: &LabeledFeature,
    query_embedding: &[f64],
    gallery: &FeatureDataset,
    gallery_embeddings: &[Vec<f64>],
    protocol: &ProtocolConfig,
) -> Result<RankedList> {
    let mut scored = Vec::with_capacity(gallery.len());
    for (i, (record, emb)) in gallery.records().iter().zip(gallery_embeddings).enumerate() {
        if protocol.exclude_same_camera_positives && record.id == query.id && record.camera == query.camera {
            continue;
        }
        scored.push((protocol.distance.compare(query_embedding, emb)?, i));
    }
    if scored.is_empty() {
        return Err(Error::Protocol(format!(
            "query (id {}, camera {}) has an empty gallery after exclusion",
            query.id, query.camera
        )));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(RankedList {
        query_id: query.id,
        query_camera: query.camera,
        relevant: scored
            .iter()
            .map(|&(_, i)| gallery.records()[i].id == query.id)
            .collect(),
        distances: scored.iter().map(|&(d, _)| d).collect(),
        gallery_indices: scored.into_iter().map(|(_, i)| i).collect(),
    })
}

fn embed_all(ds: &FeatureDataset, distance: &Distance) -> Result<Vec<Vec<f64>>> {
    ds.records().iter().map(|r| distance.embed(&r.vector)).collect()
}

/// Ranks the gallery by ascending distance to `query`; ties go to the lower
/// gallery index.
pub fn rank_gallery(query: &LabeledFeature, gallery: &FeatureDataset, protocol: &ProtocolConfig) -> Result<RankedList> {
    let q = protocol.distance.embed(&query.vector)?;
    let g = embed_all(gallery, &protocol.distance)?;
    rank_embedded(query, &q, gallery, &g, protocol)
}

/// CMC value at one rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cmc {
    pub fraction: f64,
    pub num_scored: usize,
    pub num_skipped: usize,
}

/// Fraction of queries whose first relevant entry is within the top `k`;
/// queries without any relevant entry are skipped.
pub fn cmc_at_k(lists: &[RankedList], k: usize) -> Cmc {
    assert!(k >= 1, "CMC rank must be at least 1");
    let (mut hits, mut scored, mut skipped) = (0usize, 0usize, 0usize);
    for list in lists {
        match list.first_hit() {
            Some(rank) => {
                scored += 1;
                if rank <= k {
                    hits += 1;
                }
            }
            None => skipped += 1,
        }
    }
    Cmc {
        fraction: if scored == 0 { 0.0 } else { hits as f64 / scored as f64 },
        num_scored: scored,
        num_skipped: skipped,
    }
}

/// `(1/R) · Σ_{k relevant} precision@k`; `None` when nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Summary of a retrieval run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rank1: f64,
    pub rank5: f64,
    pub map: f64,
    pub num_queries: usize,
    pub num_skipped: usize,
}

pub const EVAL_CSV_HEADER: &str = "rank1,rank5,map,num_queries,num_skipped";

impl EvalReport {
    /// Builds the report from ranked lists; the mean AP is accumulated in
    /// list order.
    pub fn from_lists(lists: &[RankedList]) -> Result<Self> {
        let r1 = cmc_at_k(lists, 1);
        let r5 = cmc_at_k(lists, 5);
        if r1.num_scored == 0 {
            return Err(Error::Protocol("no query has a relevant gallery entry".into()));
        }
        let mut ap_sum = 0.0;
        for list in lists {
            if let Some(ap) = average_precision(&list.relevant) {
                ap_sum += ap;
            }
        }
        Ok(Self {
            rank1: r1.fraction,
            rank5: r5.fraction,
            map: ap_sum / r1.num_scored as f64,
            num_queries: lists.len(),
            num_skipped: r1.num_skipped,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{EVAL_CSV_HEADER}\n{:?},{:?},{:?},{},{}\n",
            self.rank1, self.rank5, self.map, self.num_queries, self.num_skipped
        )
    }

    /// A `Rank-1 (%) | Rank-5 (%) | mAP (%)` table line.
    pub fn table_row(&self, method: &str) -> String {
        format!(
            "{method:<32} {:>6.2} {:>6.2} {:>6.2}",
            100.0 * self.rank1,
            100.0 * self.rank5,
            100.0 * self.map
        )
    }

    pub fn save(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)? + "\n";
        fs::write(json_path, json).map_err(|e| Error::io(json_path, e))?;
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Ranks every query (in parallel) and summarises the lists in query order.
pub fn ranked_lists(
    queries: &FeatureDataset,
    gallery: &FeatureDataset,
    protocol: &ProtocolConfig,
) -> Result<Vec<RankedList>> {
    if queries.dim() != gallery.dim() {
        return Err(Error::shape(gallery.dim(), queries.dim()));
    }
    let g = embed_all(gallery, &protocol.distance)?;
    let q = embed_all(queries, &protocol.distance)?;
    queries
        .records()
        .par_iter()
        .zip(q.par_iter())
        .map(|(query, emb)| rank_embedded(query, emb, gallery, &g, protocol))
        .collect()
}

pub fn evaluate(queries: &FeatureDataset, gallery: &FeatureDataset, protocol: &ProtocolConfig) -> Result<EvalReport> {
    EvalReport::from_lists(&ranked_lists(queries, gallery, protocol)?)
}
