//! kNN estimators checked against straightforward re-implementations that
//! share no code with the library: full distance matrices, full sorts and
//! masked matrix formulas.

use classdim::knn::{estimate_mle, estimate_tle, knn_distances, KnnConfig};
use classdim::synth::{sample_gaussian, GaussianSpec};
use classdim::{Diagnostics, SampleMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hypercube(d: usize, n: usize, seed: u64) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * d).map(|_| rng.random::<f64>()).collect();
    SampleMatrix::new(n, d, values).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y) * (x - y);
    }
    acc.sqrt()
}

/// Sorted `(distance, index)` neighbor lists by full sort.
fn neighbors(data: &SampleMatrix, k: usize) -> Vec<Vec<(f64, usize)>> {
    (0..data.n())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..data.n())
                .filter(|&j| j != i)
                .map(|j| (dist(data.row(i), data.row(j)), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            all
        })
        .collect()
}

fn mle_oracle(data: &SampleMatrix, k: usize, corrected: bool) -> f64 {
    let mut inverses = Vec::new();
    for nb in neighbors(data, k) {
        let t: Vec<f64> = nb.iter().map(|p| p.0).collect();
        if t.contains(&0.0) {
            continue;
        }
        let mut s = 0.0;
        for j in 0..k - 1 {
            s += (t[k - 1] / t[j]).ln();
        }
        inverses.push(s / (k - 1) as f64);
    }
    let m = inverses.len() as f64;
    if corrected {
        1.0 / (inverses.iter().sum::<f64>() / m)
    } else {
        inverses.iter().map(|v| 1.0 / v).sum::<f64>() / m
    }
}

/// Tight-locality estimate in matrix form: every pair `(a, b)` of
/// neighbors gets `S` and `T` from the general formula, then boundary cases
/// overwrite entries in increasing precedence.
fn tle_point_oracle(data: &SampleMatrix, nb: &[(f64, usize)], eps_rel: f64) -> Option<f64> {
    let k = nb.len();
    let u: Vec<f64> = nb.iter().map(|p| p.0).collect();
    let r = u[k - 1];
    let eps = eps_rel * r;
    let mut s = vec![vec![f64::NAN; k]; k];
    let mut t = vec![vec![f64::NAN; k]; k];
    let mut drop = vec![vec![false; k]; k];
    for a in 0..k {
        for b in 0..k {
            let v = dist(data.row(nb[a].1), data.row(nb[b].1));
            let (ui, uj) = (u[a], u[b]);
            let z2 = 2.0 * ui.powi(2) + 2.0 * uj.powi(2) - v.powi(2);
            let general = |w: f64| {
                let beta = ui.powi(2) + w - uj.powi(2);
                let g = r.powi(2) - ui.powi(2);
                r * ((beta.powi(2) + 4.0 * w * g).sqrt() - beta) / (2.0 * g)
            };
            s[a][b] = general(v.powi(2));
            t[a][b] = general(z2);
            if ui == r {
                s[a][b] = r * v.powi(2) / (r.powi(2) + v.powi(2) - uj.powi(2));
                t[a][b] = r * z2 / (r.powi(2) + z2 - uj.powi(2));
            }
            if ui == 0.0 {
                s[a][b] = uj;
                t[a][b] = uj;
            }
            if uj == 0.0 {
                s[a][b] = r * v / (r + v);
                t[a][b] = r * v / (r + v);
            }
            if v == 0.0 && a != b {
                drop[a][b] = true;
            }
        }
    }
    let mut n_drop = 0;
    let mut log_st = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            if drop[a][b] || s[a][b] < eps || t[a][b] < eps {
                n_drop += 1;
            } else {
                log_st += (s[a][b] / r).ln() + (t[a][b] / r).ln();
            }
        }
    }
    let mut log_u = 0.0;
    for &x in &u {
        if x < eps {
            n_drop += 1;
        } else {
            log_u += (x / r).ln();
        }
    }
    let id = -2.0 * ((k * k) as f64 - n_drop as f64) / (log_st + 2.0 * log_u);
    (id.is_finite() && id > 0.0).then_some(id)
}

#[test]
fn knn_table_matches_full_sort() {
    let x = hypercube(4, 500, 1);
    let table = knn_distances(&x, 10).unwrap();
    for (i, nb) in neighbors(&x, 10).into_iter().enumerate() {
        let d: Vec<f64> = nb.iter().map(|p| p.0).collect();
        let j: Vec<usize> = nb.iter().map(|p| p.1).collect();
        assert_eq!(table.distances_of(i), &d[..]);
        assert_eq!(table.neighbors_of(i), &j[..]);
    }
}

#[test]
fn knn_ties_break_by_index() {
    // A square: the two adjacent corners are equidistant from each corner.
    let x = SampleMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    let table = knn_distances(&x, 3).unwrap();
    assert_eq!(table.neighbors_of(0), &[1, 2, 3]);
    assert_eq!(table.neighbors_of(3), &[1, 2, 0]);
}

#[test]
fn mle_matches_oracle() {
    let cfg = KnnConfig::default();
    for (d, seed) in [(5, 11), (2, 12)] {
        let x = hypercube(d, 2000, seed);
        for corrected in [true, false] {
            let cfg = KnnConfig { apply_correction: corrected, ..cfg.clone() };
            let got = estimate_mle(&x, &cfg).unwrap().value;
            let want = mle_oracle(&x, 20, corrected);
            assert!(((got - want) / want).abs() < 1e-12, "d={d} corrected={corrected}: {got} vs {want}");
        }
    }
}

#[test]
fn mle_hypercube_five_within_fifteen_percent() {
    let est = estimate_mle(&hypercube(5, 2000, 21), &KnnConfig::default()).unwrap();
    assert!((est.value - 5.0).abs() <= 0.75, "{}", est.value);
}

#[test]
fn mle_gaussian_two_within_fifteen_percent() {
    let x = sample_gaussian(&GaussianSpec::isotropic(2, 2000, 22)).unwrap();
    let est = estimate_mle(&x, &KnnConfig::default()).unwrap();
    assert!((est.value - 2.0).abs() <= 0.3, "{}", est.value);
}

#[test]
fn tle_matches_oracle_per_point() {
    let x = hypercube(5, 400, 31);
    let cfg = KnnConfig::default();
    let est = estimate_tle(&x, &cfg).unwrap();
    let Diagnostics::PerPoint(local) = est.diagnostics else {
        panic!("tle reports per-point values");
    };
    let want: Vec<f64> = neighbors(&x, cfg.k)
        .iter()
        .filter_map(|nb| tle_point_oracle(&x, nb, cfg.tle_epsilon))
        .collect();
    assert_eq!(local.len(), want.len());
    for (g, w) in local.iter().zip(&want) {
        assert!(((g - w) / w).abs() < 1e-10, "{g} vs {w}");
    }
    let harmonic = want.len() as f64 / want.iter().map(|v| 1.0 / v).sum::<f64>();
    assert!(((est.value - harmonic) / harmonic).abs() < 1e-12);
}

#[test]
fn tle_oracle_handles_duplicates() {
    let mut rows: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()]).collect();
    rows.push(rows[3]);
    rows.push(rows[3]);
    let x = SampleMatrix::from_rows(&rows).unwrap();
    let cfg = KnnConfig { k: 8, ..Default::default() };
    let Diagnostics::PerPoint(local) = estimate_tle(&x, &cfg).unwrap().diagnostics else {
        panic!()
    };
    let want: Vec<f64> = neighbors(&x, 8)
        .iter()
        .filter_map(|nb| tle_point_oracle(&x, nb, cfg.tle_epsilon))
        .collect();
    assert_eq!(local.len(), want.len());
    for (g, w) in local.iter().zip(&want) {
        assert!(((g - w) / w).abs() < 1e-10, "{g} vs {w}");
    }
}

#[test]
fn tle_hypercube_five_within_twenty_percent() {
    let est = estimate_tle(&hypercube(5, 2000, 41), &KnnConfig::default()).unwrap();
    assert!((est.value - 5.0).abs() <= 1.0, "{}", est.value);
}

#[test]
fn tle_monotone_in_dimension() {
    let cfg = KnnConfig::default();
    let ids: Vec<f64> = [2, 5, 10]
        .iter()
        .map(|&d| estimate_tle(&hypercube(d, 2000, 50 + d as u64), &cfg).unwrap().value)
        .collect();
    assert!(ids[0] < ids[1] && ids[1] < ids[2], "{ids:?}");
}

#[test]
fn estimators_ignore_row_order() {
    let x = hypercube(3, 300, 61);
    let mut order: Vec<usize> = (0..300).collect();
    order.reverse();
    order.swap(10, 200);
    let y = x.select_rows(&order);
    let cfg = KnnConfig { k: 10, ..Default::default() };
    let (a, b) = (estimate_mle(&x, &cfg).unwrap().value, estimate_mle(&y, &cfg).unwrap().value);
    assert!((a - b).abs() < 1e-9);
    let (a, b) = (estimate_tle(&x, &cfg).unwrap().value, estimate_tle(&y, &cfg).unwrap().value);
    assert!((a - b).abs() < 1e-9);
}

/// Both MLE aggregations should agree within 5% on large hypercube
/// samples. At k = 20 the two differ by roughly the squared coefficient of
/// variation of the local inverse estimates, about 1/(k-1), so this does
/// not hold; kept runnable to document the gap.
#[test]
#[ignore = "aggregation gap at k=20 exceeds 5%; see the doc comment"]
fn mle_aggregations_agree_within_five_percent() {
    for d in [2, 5, 10] {
        let x = hypercube(d, 2000, 70 + d as u64);
        let c = estimate_mle(&x, &KnnConfig::default()).unwrap().value;
        let u = estimate_mle(&x, &KnnConfig { apply_correction: false, ..Default::default() }).unwrap().value;
        assert!(((u - c) / c).abs() < 0.05, "d={d}: corrected {c} uncorrected {u}");
    }
}
