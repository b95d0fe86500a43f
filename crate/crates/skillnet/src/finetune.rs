//! Fine-tuning study support: community skill profiles, KL-divergence
//! dataset-to-community matching, layer-offset random module subsets, and
//! weight-snapshot L2 differences over the WSNP binary format.

use crate::community::Partition;
use crate::ingest::ModuleId;
use crate::matrix::BipartiteMatrix;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("axis mismatch: partition covers {partition} nodes, matrix has {matrix} modules")]
    AxisMismatch { partition: usize, matrix: usize },
    #[error("snapshot shape mismatch for module {0}")]
    ShapeMismatch(String),
    #[error("no replacement candidate for module {0}")]
    NoCandidate(String),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Normalized skill distribution of one module community.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySkillProfile {
    pub community: usize,
    pub distribution: Vec<f64>,
}

/// Per-community skill profiles: profile_c(i) is proportional to the total
/// B^SM mass skill i places on the community's modules. An all-zero
/// community degrades to a uniform profile with a warning.
pub fn community_skill_distribution(
    sm: &BipartiteMatrix,
    partition: &Partition,
) -> Result<Vec<CommunitySkillProfile>, FinetuneError> {
    if partition.assignment.len() != sm.cols.len() {
        return Err(FinetuneError::AxisMismatch {
            partition: partition.assignment.len(),
            matrix: sm.cols.len(),
        });
    }
    let skills = sm.rows.len();
    let mut profiles = Vec::new();
    for c in 0..partition.community_count() {
        let mut dist = vec![0.0; skills];
        for (m, &label) in partition.assignment.iter().enumerate() {
            if label == c {
                for (i, d) in dist.iter_mut().enumerate() {
                    *d += sm.values[i][m];
                }
            }
        }
        let total: f64 = dist.iter().sum();
        if total > 0.0 {
            for d in dist.iter_mut() {
                *d /= total;
            }
        } else {
            log::warn!("community {c} has zero skill mass; using uniform profile");
            dist = vec![1.0 / skills as f64; skills];
        }
        profiles.push(CommunitySkillProfile { community: c, distribution: dist });
    }
    Ok(profiles)
}

/// KL(p || q) after adding `smoothing` to every entry of both vectors and
/// renormalizing.
pub fn smoothed_kl(p: &[f64], q: &[f64], smoothing: f64) -> f64 {
    let norm = |v: &[f64]| -> Vec<f64> {
        let smoothed: Vec<f64> = v.iter().map(|&x| x + smoothing).collect();
        let s: f64 = smoothed.iter().sum();
        smoothed.into_iter().map(|x| x / s).collect()
    };
    let (p, q) = (norm(p), norm(q));
    p.iter().zip(&q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Rank datasets against each community profile by ascending
/// KL(dataset || community) with 1e-9 smoothing; ties break by dataset id.
/// Returns the `top` best matches per community with their divergences.
pub fn kl_match_datasets(
    sd: &BipartiteMatrix,
    profiles: &[CommunitySkillProfile],
    top: usize,
) -> BTreeMap<usize, Vec<(String, f64)>> {
    let mut out = BTreeMap::new();
    for profile in profiles {
        let mut ranked: Vec<(String, f64)> = sd
            .cols
            .iter()
            .enumerate()
            .map(|(d, id)| {
                let column: Vec<f64> = sd.values.iter().map(|row| row[d]).collect();
                (id.clone(), smoothed_kl(&column, &profile.distribution, 1e-9))
            })
            .collect();
        ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top);
        out.insert(profile.community, ranked);
    }
    out
}

/// Control subset for a module community: every member is replaced by a
/// module of the same kind whose layer differs by 1 or 2 (uniform over the
/// valid offsets), never reusing community members. If no offset candidate
/// exists the nearest valid layer is used instead.
pub fn random_module_subset(
    community_modules: &BTreeSet<ModuleId>,
    universe: &BTreeSet<ModuleId>,
    seed: u64,
) -> Result<BTreeSet<ModuleId>, FinetuneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<ModuleId> = BTreeSet::new();
    for member in community_modules {
        let available = |id: &ModuleId| {
            universe.contains(id) && !community_modules.contains(id) && !chosen.contains(id)
        };
        let mut candidates: Vec<ModuleId> = [-2i64, -1, 1, 2]
            .iter()
            .filter_map(|&off| {
                let layer = member.layer as i64 + off;
                u32::try_from(layer).ok().map(|l| ModuleId::new(l, member.kind.clone()))
            })
            .filter(available)
            .collect();
        let pick = if let Some(p) = candidates.choose(&mut rng) {
            p.clone()
        } else {
            // fall back to the nearest valid layer beyond offset 2
            candidates.clear();
            let max_layer = universe.iter().map(|m| m.layer).max().unwrap_or(0) as i64;
            let mut found = None;
            'search: for d in 3..=(max_layer + member.layer as i64 + 1) {
                for layer in [member.layer as i64 - d, member.layer as i64 + d] {
                    if let Ok(l) = u32::try_from(layer) {
                        let id = ModuleId::new(l, member.kind.clone());
                        if available(&id) {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
            found.ok_or_else(|| FinetuneError::NoCandidate(member.to_string()))?
        };
        chosen.insert(pick);
    }
    Ok(chosen)
}

/// In-memory weight snapshot; serialized bit-exactly as WSNP.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub tensors: BTreeMap<ModuleId, Vec<f32>>,
    pub model_tag: String,
    pub step_tag: String,
}

const WSNP_MAGIC: &[u8; 4] = b"WSNP";
const WSNP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WsnpHeader {
    modules: BTreeMap<String, WsnpEntry>,
    meta: WsnpMeta,
}

#[derive(Serialize, Deserialize)]
struct WsnpEntry {
    offset: u64,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct WsnpMeta {
    model_tag: String,
    step_tag: String,
}

impl WeightSnapshot {
    /// WSNP layout: magic, u32 LE version, u64 LE header length, UTF-8 JSON
    /// header, then contiguous little-endian f32 data. Offsets are element
    /// counts from the start of the data section.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), FinetuneError> {
        let mut modules = BTreeMap::new();
        let mut offset = 0u64;
        for (id, tensor) in &self.tensors {
            modules.insert(
                id.to_string(),
                WsnpEntry { offset, count: tensor.len() as u64 },
            );
            offset += tensor.len() as u64;
        }
        let header = WsnpHeader {
            modules,
            meta: WsnpMeta { model_tag: self.model_tag.clone(), step_tag: self.step_tag.clone() },
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| FinetuneError::BadSnapshot(e.to_string()))?;
        w.write_all(WSNP_MAGIC)?;
        w.write_all(&WSNP_VERSION.to_le_bytes())?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for tensor in self.tensors.values() {
            for v in tensor {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, FinetuneError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WSNP_MAGIC {
            return Err(FinetuneError::BadSnapshot("bad magic bytes".into()));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != WSNP_VERSION {
            return Err(FinetuneError::BadSnapshot(format!("unsupported version {version}")));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let header_len = u64::from_le_bytes(buf8) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: WsnpHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| FinetuneError::BadSnapshot(e.to_string()))?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let floats: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if floats.len() * 4 != data.len() {
            return Err(FinetuneError::BadSnapshot("truncated float data".into()));
        }
        let mut tensors = BTreeMap::new();
        for (label, entry) in &header.modules {
            let id = ModuleId::parse(label)
                .map_err(|e| FinetuneError::BadSnapshot(e.to_string()))?;
            let start = entry.offset as usize;
            let end = start + entry.count as usize;
            if end > floats.len() {
                return Err(FinetuneError::BadSnapshot(format!(
                    "module {label} extends past data end"
                )));
            }
            tensors.insert(id, floats[start..end].to_vec());
        }
        Ok(WeightSnapshot {
            tensors,
            model_tag: header.meta.model_tag,
            step_tag: header.meta.step_tag,
        })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), FinetuneError> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, FinetuneError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Per-module Euclidean norm of (after − before), plus the unweighted mean
/// over modules.
pub fn weight_l2_diff(
    before: &WeightSnapshot,
    after: &WeightSnapshot,
) -> Result<(BTreeMap<ModuleId, f64>, f64), FinetuneError> {
    if before.tensors.len() != after.tensors.len() {
        return Err(FinetuneError::ShapeMismatch("module sets differ".into()));
    }
    let mut diffs = BTreeMap::new();
    for (id, b) in &before.tensors {
        let a = after
            .tensors
            .get(id)
            .ok_or_else(|| FinetuneError::ShapeMismatch(id.to_string()))?;
        if a.len() != b.len() {
            return Err(FinetuneError::ShapeMismatch(id.to_string()));
        }
        let sq: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
        diffs.insert(id.clone(), sq.sqrt());
    }
    let mean = if diffs.is_empty() {
        0.0
    } else {
        diffs.values().sum::<f64>() / diffs.len() as f64
    };
    Ok((diffs, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_ur;

    fn sm(values: Vec<Vec<f64>>) -> BipartiteMatrix {
        let rows = (0..values.len()).map(|i| format!("s{i}")).collect();
        let cols = (0..values[0].len()).map(|i| format!("0:m{i}")).collect();
        BipartiteMatrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn single_community_profile_is_row_sums() {
        let m = sm(vec![vec![2.0, 1.0], vec![1.0, 0.0]]);
        let p = community_skill_distribution(&m, &Partition::from_labels(&[0, 0])).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].distribution, vec![0.75, 0.25]);
    }

    #[test]
    fn planted_skill_loads_on_its_community() {
        // skill 0 loads only on module 0 (community A)
        let m = sm(vec![vec![5.0, 0.0], vec![1.0, 1.0]]);
        let p = community_skill_distribution(&m, &Partition::from_labels(&[0, 1])).unwrap();
        assert!(p[0].distribution[0] > p[1].distribution[0]);
    }

    #[test]
    fn uniform_sm_gives_uniform_profiles() {
        let m = sm(vec![vec![1.0; 4]; 3]);
        let p = community_skill_distribution(&m, &Partition::from_labels(&[0, 0, 1, 1])).unwrap();
        for profile in &p {
            for &v in &profile.distribution {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
            let total: f64 = profile.distribution.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_community_warns_uniform() {
        let m = sm(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let p = community_skill_distribution(&m, &Partition::from_labels(&[0, 1])).unwrap();
        assert_eq!(p[1].distribution, vec![0.5, 0.5]);
    }

    #[test]
    fn axis_mismatch_rejected() {
        let m = sm(vec![vec![1.0, 1.0]]);
        assert!(matches!(
            community_skill_distribution(&m, &Partition::from_labels(&[0, 0, 0])),
            Err(FinetuneError::AxisMismatch { .. })
        ));
    }

    #[test]
    fn kl_zero_for_matching_dataset() {
        // dataset d0's skill column equals profile
        let sd = BipartiteMatrix::new(
            vec!["s0".into(), "s1".into()],
            vec!["d0".into(), "d1".into()],
            vec![vec![3.0, 9.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let profile = CommunitySkillProfile { community: 0, distribution: vec![0.75, 0.25] };
        let ranked = kl_match_datasets(&sd, &[profile], 2);
        let matches = &ranked[&0];
        assert_eq!(matches[0].0, "d0");
        assert!(matches[0].1 < 1e-12);
        assert!(matches[1].1 > matches[0].1);
    }

    #[test]
    fn disjoint_support_ranks_last() {
        let sd = BipartiteMatrix::new(
            vec!["s0".into(), "s1".into(), "s2".into()],
            vec!["near".into(), "disjoint".into(), "partial".into()],
            vec![
                vec![5.0, 0.0, 2.0],
                vec![5.0, 0.0, 5.0],
                vec![0.0, 10.0, 0.0],
            ],
        )
        .unwrap();
        let profile =
            CommunitySkillProfile { community: 0, distribution: vec![0.5, 0.5, 0.0] };
        let ranked = kl_match_datasets(&sd, &[profile], 3);
        assert_eq!(ranked[&0].last().unwrap().0, "disjoint");
    }

    #[test]
    fn kl_tie_breaks_by_dataset_id() {
        let sd = BipartiteMatrix::new(
            vec!["s0".into(), "s1".into()],
            vec!["b".into(), "a".into()],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let profile = CommunitySkillProfile { community: 0, distribution: vec![0.5, 0.5] };
        let ranked = kl_match_datasets(&sd, &[profile], 2);
        assert_eq!(ranked[&0][0].0, "a");
    }

    fn universe(layers: u32, kinds: &[&str]) -> BTreeSet<ModuleId> {
        (0..layers)
            .flat_map(|l| kinds.iter().map(move |k| ModuleId::new(l, *k)))
            .collect()
    }

    #[test]
    fn subset_offsets_are_one_or_two_layers() {
        let uni = universe(12, &["attn-q", "mlp-up"]);
        let community: BTreeSet<ModuleId> = [ModuleId::new(5, "attn-q")].into();
        for seed in 0..50 {
            let s = random_module_subset(&community, &uni, seed).unwrap();
            assert_eq!(s.len(), 1);
            let m = s.iter().next().unwrap();
            assert_eq!(m.kind, "attn-q");
            assert!(matches!(m.layer, 3 | 4 | 6 | 7), "layer {}", m.layer);
        }
    }

    #[test]
    fn subset_offset_distribution_is_uniform() {
        let uni = universe(12, &["attn-q"]);
        let community: BTreeSet<ModuleId> = [ModuleId::new(5, "attn-q")].into();
        let mut counts = [0u64; 4];
        for seed in 0..1000 {
            let s = random_module_subset(&community, &uni, seed).unwrap();
            let slot = match s.iter().next().unwrap().layer {
                3 => 0,
                4 => 1,
                6 => 2,
                7 => 3,
                other => panic!("unexpected layer {other}"),
            };
            counts[slot] += 1;
        }
        // chi-squared goodness of fit against uniform over four offsets
        let stat: f64 = counts.iter().map(|&c| (c as f64 - 250.0).powi(2) / 250.0).sum();
        let p = gamma_ur(1.5, stat / 2.0);
        assert!(p > 0.01, "offset counts {counts:?}, p = {p}");
    }

    #[test]
    fn subset_preserves_kind_multiset_and_avoids_community() {
        let uni = universe(10, &["attn-q", "attn-k", "mlp-up"]);
        let community: BTreeSet<ModuleId> = [
            ModuleId::new(2, "attn-q"),
            ModuleId::new(3, "attn-q"),
            ModuleId::new(4, "mlp-up"),
        ]
        .into();
        let s = random_module_subset(&community, &uni, 17).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.is_disjoint(&community));
        let kinds = |set: &BTreeSet<ModuleId>| -> Vec<String> {
            let mut k: Vec<String> = set.iter().map(|m| m.kind.clone()).collect();
            k.sort();
            k
        };
        assert_eq!(kinds(&s), kinds(&community));
    }

    #[test]
    fn exhausted_pool_is_no_candidate() {
        let uni = universe(3, &["attn-q"]);
        let community = uni.clone();
        assert!(matches!(
            random_module_subset(&community, &uni, 1),
            Err(FinetuneError::NoCandidate(_))
        ));
    }

    #[test]
    fn fallback_uses_nearest_valid_layer() {
        // only layers 0 and 9 exist; member at 0 has no candidate within 2
        let uni: BTreeSet<ModuleId> =
            [ModuleId::new(0, "attn-q"), ModuleId::new(9, "attn-q")].into();
        let community: BTreeSet<ModuleId> = [ModuleId::new(0, "attn-q")].into();
        let s = random_module_subset(&community, &uni, 1).unwrap();
        assert_eq!(s.iter().next().unwrap().layer, 9);
    }

    fn snap(pairs: &[(&str, &[f32])]) -> WeightSnapshot {
        WeightSnapshot {
            tensors: pairs
                .iter()
                .map(|(label, data)| (ModuleId::parse(label).unwrap(), data.to_vec()))
                .collect(),
            model_tag: "toy".into(),
            step_tag: "step0".into(),
        }
    }

    #[test]
    fn wsnp_round_trip_is_bit_exact() {
        let s = snap(&[("0:attn-q", &[1.5, -2.25, 0.0]), ("1:mlp-up", &[3.0])]);
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"WSNP");
        let back = WeightSnapshot::read(&buf[..]).unwrap();
        assert_eq!(back, s);
        let mut buf2 = Vec::new();
        back.write(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn wsnp_rejects_bad_magic() {
        let mut buf = Vec::new();
        snap(&[("0:a", &[1.0])]).write(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            WeightSnapshot::read(&buf[..]),
            Err(FinetuneError::BadSnapshot(_))
        ));
    }

    #[test]
    fn l2_diff_identity_and_unit_perturbation() {
        let before = snap(&[("0:a", &[1.0, 2.0]), ("0:b", &[3.0])]);
        let (d, mean) = weight_l2_diff(&before, &before).unwrap();
        assert!(d.values().all(|&v| v == 0.0));
        assert_eq!(mean, 0.0);
        let mut after = before.clone();
        after.tensors.get_mut(&ModuleId::new(0, "b")).unwrap()[0] += 0.5;
        let (d, mean) = weight_l2_diff(&before, &after).unwrap();
        assert_eq!(d[&ModuleId::new(0, "a")], 0.0);
        assert!((d[&ModuleId::new(0, "b")] - 0.5).abs() < 1e-9);
        assert!((mean - 0.25).abs() < 1e-9);
    }

    #[test]
    fn l2_diff_known_norm() {
        let before = snap(&[("0:a", &[0.0; 9])]);
        let mut after = before.clone();
        // perturbation of norm 3: nine entries of 1.0
        for v in after.tensors.get_mut(&ModuleId::new(0, "a")).unwrap() {
            *v = 1.0;
        }
        let (d, _) = weight_l2_diff(&before, &after).unwrap();
        assert!((d[&ModuleId::new(0, "a")] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn l2_diff_symmetric_and_triangle() {
        let a = snap(&[("0:a", &[1.0, 2.0, 3.0])]);
        let b = snap(&[("0:a", &[0.0, -1.0, 5.0])]);
        let c = snap(&[("0:a", &[2.0, 2.0, 2.0])]);
        let (_, ab) = weight_l2_diff(&a, &b).unwrap();
        let (_, ba) = weight_l2_diff(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let (_, ac) = weight_l2_diff(&a, &c).unwrap();
        let (_, cb) = weight_l2_diff(&c, &b).unwrap();
        assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn l2_diff_shape_mismatch() {
        let a = snap(&[("0:a", &[1.0])]);
        let b = snap(&[("0:a", &[1.0, 2.0])]);
        assert!(matches!(weight_l2_diff(&a, &b), Err(FinetuneError::ShapeMismatch(_))));
    }
}
