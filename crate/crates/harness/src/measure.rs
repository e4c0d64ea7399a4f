//! Proof sizes and storage growth on synthetic trees.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swt_core::bundle::{LogMirrorProofs, MirrorProofs, MIRROR_GENERATIONS};
use swt_core::clock::ManualClock;
use swt_core::merkle::{verify_consistency, TreeState};
use swt_core::tlog::EntryKind;
use swt_core::Digest;
use swt_logserver::{Log, LogSettings, Role};

use crate::HarnessError;

/// Least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    LinearFit { slope, intercept, r2 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofPoint {
    pub tree_size: u64,
    pub log2_size: f64,
    /// Mean path length over the sampled leaves and old sizes.
    pub inclusion_hashes: f64,
    pub consistency_hashes: f64,
    pub inclusion_json_bytes: f64,
    pub consistency_json_bytes: f64,
    pub inclusion_compact_bytes: f64,
    pub consistency_compact_bytes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofCurve {
    pub points: Vec<ProofPoint>,
    /// Hashes against log2 of the tree size.
    pub inclusion_fit: LinearFit,
    pub consistency_fit: LinearFit,
}

fn synthetic_tree(n: u64) -> TreeState {
    TreeState::from_leaf_hashes((0..n).map(|i| Digest::of(&i.to_be_bytes())))
}

/// Proof sizes for tree sizes between `2^min_exp` and `2^max_exp`, with a
/// non-power-of-two size between each pair of powers.
pub fn proof_curve(min_exp: u32, max_exp: u32, seed: u64) -> ProofCurve {
    let tree = synthetic_tree(1 << max_exp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = Vec::new();
    for e in min_exp..=max_exp {
        sizes.push(1u64 << e);
        if e < max_exp {
            sizes.push((1u64 << e) + (1 << (e - 1)) + 1);
        }
    }
    let samples = 16;
    let mut points = Vec::new();
    for n in sizes {
        let mut acc = [0f64; 6];
        for _ in 0..samples {
            let leaf = rng.gen_range(0..n);
            let old = rng.gen_range(1..n);
            let inc = tree.prove_inclusion(leaf, n).expect("leaf below size");
            let con = tree.prove_consistency(old, n).expect("old below size");
            acc[0] += inc.path.len() as f64;
            acc[1] += con.path.len() as f64;
            acc[2] += serde_json::to_vec(&inc).expect("proof serializes").len() as f64;
            acc[3] += serde_json::to_vec(&con).expect("proof serializes").len() as f64;
            // Inclusion proofs have the same header and hash layout.
            acc[4] += (17 + 32 * inc.path.len()) as f64;
            acc[5] += con.to_compact().len() as f64;
        }
        let m = |i: usize| acc[i] / samples as f64;
        points.push(ProofPoint {
            tree_size: n,
            log2_size: (n as f64).log2(),
            inclusion_hashes: m(0),
            consistency_hashes: m(1),
            inclusion_json_bytes: m(2),
            consistency_json_bytes: m(3),
            inclusion_compact_bytes: m(4),
            consistency_compact_bytes: m(5),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.log2_size).collect();
    let inclusion_fit = fit(&xs, &points.iter().map(|p| p.inclusion_hashes).collect::<Vec<_>>());
    let consistency_fit = fit(&xs, &points.iter().map(|p| p.consistency_hashes).collect::<Vec<_>>());
    ProofCurve { points, inclusion_fit, consistency_fit }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MirrorMeasurement {
    pub tree_size: u64,
    pub releases: usize,
    pub spacing: u64,
    pub proofs: usize,
    pub hashes: usize,
    pub bytes: usize,
    pub all_verify: bool,
}

/// The mirrored consistency proofs an auditor would receive at `tree_size`,
/// with the last releases `spacing` leaves apart.
pub fn mirror_bundle(tree_size: u64, spacing: u64) -> MirrorMeasurement {
    let tree = synthetic_tree(tree_size);
    let root = tree.root();
    let mut proofs = Vec::new();
    let mut all_verify = true;
    for j in (1..=MIRROR_GENERATIONS as u64).rev() {
        let old = tree_size - j * spacing;
        let p = tree.prove_consistency(old, tree_size).expect("old below size");
        all_verify &= verify_consistency(&tree.root_at(old).expect("old below size"), &root, &p);
        proofs.push(p);
    }
    let hashes = proofs.iter().map(|p| p.path.len()).sum();
    let bundle = MirrorProofs { logs: vec![LogMirrorProofs { log_id: "log-a".into(), tree_size, proofs }] };
    MirrorMeasurement { tree_size, releases: MIRROR_GENERATIONS, spacing, proofs: MIRROR_GENERATIONS, hashes, bytes: bundle.to_bytes().len(), all_verify }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoragePoint {
    pub leaves: u64,
    pub blob_bytes: u64,
    pub unique_payload_bytes: u64,
    /// Database file length.
    pub meta_file_bytes: u64,
    /// Pages the database has allocated.
    pub meta_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageCurve {
    pub points: Vec<StoragePoint>,
    /// Tree database bytes per leaf over the lower and upper thirds.
    pub low_slope: f64,
    pub high_slope: f64,
    pub blob_accounting_exact: bool,
}

impl StorageCurve {
    pub fn slope_ratio(&self) -> f64 {
        self.high_slope / self.low_slope
    }
}

/// Grows a disk-backed log from empty to `max_leaves` in `step` batches. A
/// tenth of the submissions repeat an earlier payload.
pub fn storage_curve(max_leaves: u64, step: u64, seed: u64) -> Result<StorageCurve, HarnessError> {
    let dir = tempfile::tempdir()?;
    let mut settings = LogSettings::new("log-a", crate::replay::log_key("log-a"), Role::Committing);
    settings.tokens = vec!["measure".into()];
    let log = Log::open(settings, Arc::new(ManualClock::new(crate::corpus::T0)), dir.path())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unique: HashMap<Digest, u64> = HashMap::new();
    let mut history: Vec<Vec<u8>> = Vec::new();
    let mut points = Vec::new();
    while log.size() < max_leaves {
        let mut batch = Vec::new();
        let mut fresh = 0;
        while log.size() + fresh < (log.size() / step + 1) * step {
            let payload = if !history.is_empty() && rng.gen_bool(0.1) {
                history[rng.gen_range(0..history.len())].clone()
            } else {
                let mut p = vec![0u8; rng.gen_range(200..2000)];
                rng.fill(&mut p[..]);
                p
            };
            let d = Digest::of(&payload);
            if unique.insert(d, payload.len() as u64).is_none() {
                fresh += 1;
                history.push(payload.clone());
            }
            batch.push((EntryKind::IndexFile, payload));
        }
        log.bulk_append(&batch)?;
        points.push(StoragePoint {
            leaves: log.size(),
            blob_bytes: log.blob_bytes(),
            unique_payload_bytes: unique.values().sum(),
            meta_file_bytes: log.meta_bytes(),
            meta_bytes: log.meta_allocated_bytes()?,
        });
    }
    let third = points.len() / 3;
    let slope = |pts: &[StoragePoint]| {
        let xs: Vec<f64> = pts.iter().map(|p| p.leaves as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.meta_bytes as f64).collect();
        fit(&xs, &ys).slope
    };
    Ok(StorageCurve {
        low_slope: slope(&points[..third.max(2)]),
        high_slope: slope(&points[points.len() - third.max(2)..]),
        blob_accounting_exact: points.iter().all(|p| p.blob_bytes == p.unique_payload_bytes),
        points,
    })
}
