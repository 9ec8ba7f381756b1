//! Two-sample Kolmogorov–Smirnov statistics, and their average over random
//! projection directions for vector-valued samples.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::records::{csv_error, LogitRecord, RecordPools};
use crate::error::{Error, Result};
use crate::numerics::dot;

/// `sup_x |F1(x) - F2(x)|` by a merge scan over the sorted samples.
pub fn two_sample_ks(s1: &[f64], s2: &[f64]) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::EmptyInput("two_sample_ks"));
    }
    let mut a = s1.to_vec();
    let mut b = s2.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(ks_sorted(&a, &b))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i].total_cmp(&v).is_le() {
            i += 1;
        }
        while j < b.len() && b[j].total_cmp(&v).is_le() {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// `num` unit vectors in uniformly random directions.
pub fn random_directions(dim: usize, num: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dot(&v, &v).sqrt();
            // degenerate draws are resampled
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Mean two-sample KS statistic of both samples projected onto each direction.
pub fn ks_phi_with_directions<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    s1: &[A],
    s2: &[B],
    directions: &[Vec<f64>],
) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() || directions.is_empty() {
        return Err(Error::EmptyInput("ks_phi"));
    }
    let dim = s1[0].as_ref().len();
    if s1.iter().map(AsRef::as_ref).chain(s2.iter().map(AsRef::as_ref)).any(|v| v.len() != dim)
        || directions.iter().any(|d| d.len() != dim)
    {
        return Err(Error::shape("ks_phi samples and directions must share a dimension"));
    }
    let mut total = 0.0;
    let mut p1 = vec![0.0; s1.len()];
    let mut p2 = vec![0.0; s2.len()];
    for phi in directions {
        for (p, v) in p1.iter_mut().zip(s1) {
            *p = dot(phi, v.as_ref());
        }
        for (p, v) in p2.iter_mut().zip(s2) {
            *p = dot(phi, v.as_ref());
        }
        p1.sort_by(f64::total_cmp);
        p2.sort_by(f64::total_cmp);
        total += ks_sorted(&p1, &p2);
    }
    Ok(total / directions.len() as f64)
}

pub fn ks_phi<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    s1: &[A],
    s2: &[B],
    num_directions: usize,
    seed: u64,
) -> Result<f64> {
    let dim = s1.first().ok_or(Error::EmptyInput("ks_phi"))?.as_ref().len();
    ks_phi_with_directions(s1, s2, &random_directions(dim, num_directions, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub scope: String,
    pub statistic: f64,
    pub num_directions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub rows: Vec<KsRow>,
}

impl KsReport {
    pub fn get(&self, scope: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.scope == scope).map(|r| r.statistic)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scope", "statistic", "num_directions", "seed"])
            .map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.scope.clone(),
                r.statistic.to_string(),
                r.num_directions.to_string(),
                r.seed.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-class `KS_Φ` between seen and not-seen logits, with `unlearned` and
/// `remaining` rows averaging over deleted and retained classes. When the
/// records include a baseline pool, the same rows are repeated with a
/// `baseline_` prefix comparing the two not-seen pools.
pub fn ks_report(
    records: &[LogitRecord],
    deleted: &[usize],
    num_directions: usize,
    seed: u64,
) -> Result<KsReport> {
    let pools = RecordPools::split(records);
    if pools.seen.is_empty() || pools.not_seen.is_empty() {
        return Err(Error::DegenerateData("ks report needs seen and not-seen records".into()));
    }
    let dim = super::records::check_dimension(records)?;
    let directions = random_directions(dim, num_directions, seed);

    let classes: std::collections::BTreeSet<usize> = records.iter().map(|r| r.true_class).collect();
    let of_class = |pool: &[&LogitRecord], c: usize| -> Vec<Vec<f64>> {
        pool.iter().filter(|r| r.true_class == c).map(|r| r.logits.clone()).collect()
    };

    let mut rows = Vec::new();
    let mut compare = |prefix: &str, first: &[&LogitRecord], second: &[&LogitRecord]| -> Result<()> {
        let mut unlearned = Vec::new();
        let mut remaining = Vec::new();
        for &c in &classes {
            let (a, b) = (of_class(first, c), of_class(second, c));
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let stat = ks_phi_with_directions(&a, &b, &directions)?;
            if deleted.contains(&c) {
                unlearned.push(stat);
            } else {
                remaining.push(stat);
            }
            rows.push(KsRow {
                scope: format!("{prefix}class_{c}"),
                statistic: stat,
                num_directions,
                seed,
            });
        }
        for (name, values) in [("unlearned", unlearned), ("remaining", remaining)] {
            if !values.is_empty() {
                rows.push(KsRow {
                    scope: format!("{prefix}{name}"),
                    statistic: values.iter().sum::<f64>() / values.len() as f64,
                    num_directions,
                    seed,
                });
            }
        }
        Ok(())
    };
    compare("", &pools.seen, &pools.not_seen)?;
    if !pools.baseline.is_empty() {
        compare("baseline_", &pools.not_seen, &pools.baseline)?;
    }
    Ok(KsReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(s1: &[f64], s2: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        s1.iter()
            .chain(s2)
            .map(|&x| (ecdf(s1, x) - ecdf(s2, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn examples() {
        assert_eq!(two_sample_ks(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(two_sample_ks(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.5);
        assert_eq!(brute_force(&[1.0, 3.0], &[2.0, 4.0]), 0.5);
        assert!(matches!(two_sample_ks(&[], &[1.0]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ks_phi_identity_and_reduction() {
        let s: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1, (i * i) as f64 % 7.0]).collect();
        assert_eq!(ks_phi(&s, &s, 50, 3).unwrap(), 0.0);

        let t: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.2 - 1.0, 1.0]).collect();
        let e0 = vec![vec![1.0, 0.0]];
        let first: Vec<f64> = s.iter().map(|v| v[0]).collect();
        let first_t: Vec<f64> = t.iter().map(|v| v[0]).collect();
        assert_eq!(
            ks_phi_with_directions(&s, &t, &e0).unwrap(),
            two_sample_ks(&first, &first_t).unwrap()
        );
        assert!(ks_phi(&s, &[vec![1.0]], 5, 0).is_err());
    }

    #[test]
    fn directions_are_unit_and_seeded() {
        let d = random_directions(5, 10, 1);
        assert_eq!(d, random_directions(5, 10, 1));
        for v in &d {
            assert!((dot(v, v) - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(s1 in prop::collection::vec(-5i32..5, 1..12), s2 in prop::collection::vec(-5i32..5, 1..12)) {
            let a: Vec<f64> = s1.iter().map(|&v| f64::from(v)).collect();
            let b: Vec<f64> = s2.iter().map(|&v| f64::from(v)).collect();
            let ks = two_sample_ks(&a, &b).unwrap();
            prop_assert!((ks - brute_force(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ks, two_sample_ks(&b, &a).unwrap());
            let ea: Vec<f64> = a.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            let eb: Vec<f64> = b.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert!((two_sample_ks(&ea, &eb).unwrap() - ks).abs() < 1e-12);
        }
    }
}
