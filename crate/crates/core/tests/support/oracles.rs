//! Brute-force metric oracles shared by the metric tests and the
//! acceptance run.

use glad_core::matcore::SymmetricMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Sparse random truth with at least one edge and one non-edge, and a noisy
/// prediction with coarse rounding so that ties and exact zeros occur.
pub fn random_case(rng: &mut ChaCha20Rng) -> (SymmetricMatrix, SymmetricMatrix) {
    let d = rng.gen_range(3..9);
    loop {
        let truth = SymmetricMatrix::from_fn(d, |i, j| {
            if i == j {
                2.0
            } else if rng.gen_bool(0.3) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .unwrap();
        let edges = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).filter(|&(i, j)| truth.get(i, j) != 0.0).count();
        if edges == 0 || edges == d * (d - 1) / 2 {
            continue;
        }
        let noise = rng.gen_range(0.0..0.6);
        let pred = SymmetricMatrix::from_fn(d, |i, j| truth.get(i, j) + rng.gen_range(-noise..noise))
            .unwrap()
            .map(|v| (v * 10.0).round() / 10.0);
        return (pred, truth);
    }
}

pub fn brute_nmse(preds: &[SymmetricMatrix], truths: &[SymmetricMatrix]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let d = t.dim();
        for i in 0..d {
            for j in 0..d {
                num += (p.get(i, j) - t.get(i, j)).powi(2);
                den += t.get(i, j).powi(2);
            }
        }
    }
    10.0 * (num / den).log10()
}

pub fn brute_ps(preds: &[SymmetricMatrix], truths: &[SymmetricMatrix], thr: f64) -> f64 {
    let ok = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| {
            let d = t.dim();
            (0..d).all(|i| {
                (0..d).filter(|&j| j != i).all(|j| {
                    let (pv, tv) = (p.get(i, j), t.get(i, j));
                    if tv == 0.0 {
                        pv.abs() <= thr
                    } else {
                        pv.abs() > thr && (pv > 0.0) == (tv > 0.0)
                    }
                })
            })
        })
        .count();
    ok as f64 / preds.len() as f64
}

pub fn brute_auc(p: &SymmetricMatrix, t: &SymmetricMatrix) -> f64 {
    let d = t.dim();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if t.get(i, j) != 0.0 {
                pos.push(p.get(i, j).abs());
            } else {
                neg.push(p.get(i, j).abs());
            }
        }
    }
    let mut score = 0.0;
    for a in &pos {
        for b in &neg {
            score += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    score / (pos.len() * neg.len()) as f64
}

pub fn brute_edge_stats(p: &SymmetricMatrix, t: &SymmetricMatrix, thr: f64) -> (f64, f64, f64) {
    let d = t.dim();
    let pairs: Vec<(bool, bool)> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .map(|(i, j)| (t.get(i, j) != 0.0, p.get(i, j).abs() > thr))
        .collect();
    let count = |f: fn(&(bool, bool)) -> bool| pairs.iter().filter(|x| f(x)).count() as f64;
    let tp = count(|x| x.0 && x.1);
    let fp = count(|x| !x.0 && x.1);
    let fneg = count(|x| x.0 && !x.1);
    let tn = count(|x| !x.0 && !x.1);
    (fp / (fp + tp).max(1.0), tp / (tp + fneg), fp / (fp + tn))
}
