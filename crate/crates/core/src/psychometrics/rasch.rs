//! Rasch calibration by joint maximum likelihood.
//!
//! Abilities and difficulties are updated alternately with one safeguarded
//! Newton step per parameter per outer iteration: a step that would lower the
//! parameter's own log-likelihood contribution is halved until it does not.
//! Because the Rasch log-likelihood separates into per-person terms given the
//! difficulties (and per-item terms given the abilities), the joint
//! log-likelihood never decreases across iterations. Difficulties are
//! centered to mean zero after each sweep; the shift is applied to the
//! abilities too, which leaves the likelihood unchanged.
//!
//! Persons and items with extreme scores have no finite estimate. They are
//! removed (repeatedly, since removing one can make another extreme) and
//! placed afterwards by solving `sum P = score` with the score pulled half a
//! point inside the boundary.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::numeric::{logit, sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaschOptions {
    /// Convergence threshold on the largest parameter change, in logits.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RaschOptions {
    fn default() -> Self {
        RaschOptions {
            tol: 1e-4,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub b: BTreeMap<String, f64>,
    pub theta: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood of the estimable sub-matrix at the final estimates.
    pub log_likelihood: f64,
    /// Log-likelihood after every outer iteration, starting from the initial
    /// values.
    pub log_likelihood_trace: Vec<f64>,
    /// Items placed by the half-score rule rather than estimated.
    pub extreme_items: BTreeSet<String>,
    pub extreme_persons: BTreeSet<String>,
}

/// Sparse person-by-item 0/1 matrix.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    pub persons: Vec<String>,
    pub items: Vec<String>,
    obs: Vec<(usize, usize, bool)>,
    by_person: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl ResponseMatrix {
    /// `obs` holds `(person index, item index, correct)` triples.
    pub fn new(persons: Vec<String>, items: Vec<String>, obs: Vec<(usize, usize, bool)>) -> Self {
        let mut by_person = vec![Vec::new(); persons.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        for (k, &(p, i, _)) in obs.iter().enumerate() {
            by_person[p].push(k);
            by_item[i].push(k);
        }
        ResponseMatrix {
            persons,
            items,
            obs,
            by_person,
            by_item,
        }
    }

    /// Included responses of `dataset`, persons and items in dataset order.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut person_idx: HashMap<&str, usize> = HashMap::new();
        let mut item_idx: HashMap<&str, usize> = HashMap::new();
        let mut persons = Vec::new();
        let mut items = Vec::new();
        for c in dataset.candidates().iter().filter(|c| c.included) {
            person_idx.insert(&c.candidate_id, persons.len());
            persons.push(c.candidate_id.clone());
        }
        for item in dataset.items() {
            item_idx.insert(&item.item_id, items.len());
            items.push(item.item_id.clone());
        }
        let obs = dataset
            .included_responses()
            .map(|r| (person_idx[r.candidate_id.as_str()], item_idx[r.item_id.as_str()], r.correct))
            .collect();
        ResponseMatrix::new(persons, items, obs)
    }

    pub fn n_observations(&self) -> usize {
        self.obs.len()
    }

    /// Full-data Rasch log-likelihood.
    pub fn log_likelihood(&self, theta: &[f64], b: &[f64]) -> f64 {
        self.obs
            .iter()
            .map(|&(p, i, x)| obs_ll(theta[p] - b[i], x))
            .sum()
    }

    /// Analytic gradient of [`Self::log_likelihood`] with respect to every
    /// theta and every b.
    pub fn gradient(&self, theta: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g_theta = vec![0.0; theta.len()];
        let mut g_b = vec![0.0; b.len()];
        for &(p, i, x) in &self.obs {
            let resid = f64::from(u8::from(x)) - sigmoid(theta[p] - b[i]);
            g_theta[p] += resid;
            g_b[i] -= resid;
        }
        (g_theta, g_b)
    }
}

#[inline]
fn obs_ll(eta: f64, x: bool) -> f64 {
    if x {
        eta - softplus(eta)
    } else {
        -softplus(eta)
    }
}

const MAX_NEWTON_STEP: f64 = 2.0;

/// One safeguarded Newton step on a single concave 1-D log-likelihood.
/// `sign` is +1 for a person (eta = theta - b) and -1 for an item.
fn newton_update(
    current: f64,
    others: impl Iterator<Item = (f64, bool)> + Clone,
    sign: f64,
) -> f64 {
    let ll = |v: f64| -> f64 { others.clone().map(|(o, x)| obs_ll(sign * (v - o), x)).sum() };
    let (mut grad, mut info) = (0.0, 0.0);
    for (o, x) in others.clone() {
        let p = sigmoid(sign * (current - o));
        grad += sign * (f64::from(u8::from(x)) - p);
        info += p * (1.0 - p);
    }
    if info <= 0.0 {
        return current;
    }
    let mut step = (grad / info).clamp(-MAX_NEWTON_STEP, MAX_NEWTON_STEP);
    let base = ll(current);
    for _ in 0..30 {
        let candidate = current + step;
        if ll(candidate) >= base {
            return candidate;
        }
        step *= 0.5;
    }
    current
}

/// Solves `sum_k P(sign * (v - others_k)) = target` for v by bisection.
fn solve_expected_score(others: &[f64], target: f64, sign: f64) -> f64 {
    let expected = |v: f64| -> f64 { others.iter().map(|&o| sigmoid(sign * (v - o))).sum() };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // Expected score increases in v for persons (sign = +1) and
        // decreases for items.
        let too_high = (expected(mid) - target) * sign > 0.0;
        if too_high {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Calibrates the included responses of `dataset`.
pub fn rasch_calibrate(dataset: &Dataset, options: &RaschOptions) -> Result<CalibrationResult> {
    calibrate_matrix(&ResponseMatrix::from_dataset(dataset), options)
}

pub fn calibrate_matrix(m: &ResponseMatrix, options: &RaschOptions) -> Result<CalibrationResult> {
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::InvalidArgument("tol must be positive and max_iter at least 1".into()));
    }
    let (n_p, n_i) = (m.persons.len(), m.items.len());
    let mut active_p = vec![true; n_p];
    let mut active_i = vec![true; n_i];

    // Peel off extreme persons and items until nothing changes.
    loop {
        let mut changed = false;
        for p in 0..n_p {
            if !active_p[p] {
                continue;
            }
            let (mut n, mut s) = (0usize, 0usize);
            for &k in &m.by_person[p] {
                let (_, i, x) = m.obs[k];
                if active_i[i] {
                    n += 1;
                    s += usize::from(x);
                }
            }
            if n == 0 || s == 0 || s == n {
                active_p[p] = false;
                changed = true;
            }
        }
        for i in 0..n_i {
            if !active_i[i] {
                continue;
            }
            let (mut n, mut s) = (0usize, 0usize);
            for &k in &m.by_item[i] {
                let (p, _, x) = m.obs[k];
                if active_p[p] {
                    n += 1;
                    s += usize::from(x);
                }
            }
            if n == 0 || s == 0 || s == n {
                active_i[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !active_p.iter().any(|&a| a) || !active_i.iter().any(|&a| a) {
        return Err(Error::InsufficientData(
            "no estimable parameters: every person or item has an extreme score".into(),
        ));
    }

    let active_obs = |k: usize| -> bool {
        let (p, i, _) = m.obs[k];
        active_p[p] && active_i[i]
    };

    // Starting values from observed proportions.
    let mut theta = vec![0.0; n_p];
    let mut b = vec![0.0; n_i];
    for p in (0..n_p).filter(|&p| active_p[p]) {
        let ks: Vec<usize> = m.by_person[p].iter().copied().filter(|&k| active_obs(k)).collect();
        let s = ks.iter().filter(|&&k| m.obs[k].2).count() as f64;
        theta[p] = logit(s / ks.len() as f64);
    }
    for i in (0..n_i).filter(|&i| active_i[i]) {
        let ks: Vec<usize> = m.by_item[i].iter().copied().filter(|&k| active_obs(k)).collect();
        let s = ks.iter().filter(|&&k| m.obs[k].2).count() as f64;
        b[i] = -logit(s / ks.len() as f64);
    }
    center(&mut b, &mut theta, &active_i, &active_p);

    let active_ll = |theta: &[f64], b: &[f64]| -> f64 {
        (0..m.obs.len())
            .filter(|&k| active_obs(k))
            .map(|k| {
                let (p, i, x) = m.obs[k];
                obs_ll(theta[p] - b[i], x)
            })
            .sum()
    };

    let mut trace = vec![active_ll(&theta, &b)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let old_theta = theta.clone();
        let old_b = b.clone();

        for p in (0..n_p).filter(|&p| active_p[p]) {
            let others = m.by_person[p]
                .iter()
                .filter(|&&k| active_i[m.obs[k].1])
                .map(|&k| (b[m.obs[k].1], m.obs[k].2));
            theta[p] = newton_update(theta[p], others, 1.0);
        }
        for i in (0..n_i).filter(|&i| active_i[i]) {
            let others = m.by_item[i]
                .iter()
                .filter(|&&k| active_p[m.obs[k].0])
                .map(|&k| (theta[m.obs[k].0], m.obs[k].2));
            b[i] = newton_update(b[i], others, -1.0);
        }
        center(&mut b, &mut theta, &active_i, &active_p);

        trace.push(active_ll(&theta, &b));
        let max_change = (0..n_p)
            .filter(|&p| active_p[p])
            .map(|p| (theta[p] - old_theta[p]).abs())
            .chain((0..n_i).filter(|&i| active_i[i]).map(|i| (b[i] - old_b[i]).abs()))
            .fold(0.0, f64::max);
        if max_change < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Rasch calibration did not converge in {} iterations", options.max_iter);
    }
    let log_likelihood = *trace.last().unwrap();

    // Half-score placement of persons, then items, against final estimates.
    let mut theta_out: Vec<Option<f64>> = (0..n_p).map(|p| active_p[p].then_some(theta[p])).collect();
    let mut extreme_persons = BTreeSet::new();
    for p in (0..n_p).filter(|&p| !active_p[p]) {
        let (bs, s): (Vec<f64>, usize) = m.by_person[p]
            .iter()
            .filter(|&&k| active_i[m.obs[k].1])
            .fold((Vec::new(), 0), |(mut bs, s), &k| {
                bs.push(b[m.obs[k].1]);
                (bs, s + usize::from(m.obs[k].2))
            });
        if bs.is_empty() {
            continue;
        }
        let target = (s as f64).clamp(0.5, bs.len() as f64 - 0.5);
        theta_out[p] = Some(solve_expected_score(&bs, target, 1.0));
        extreme_persons.insert(m.persons[p].clone());
    }
    let mut b_out: Vec<Option<f64>> = (0..n_i).map(|i| active_i[i].then_some(b[i])).collect();
    let mut extreme_items = BTreeSet::new();
    for i in (0..n_i).filter(|&i| !active_i[i]) {
        let mut ts = Vec::new();
        let mut s = 0usize;
        for &k in &m.by_item[i] {
            let (p, _, x) = m.obs[k];
            if let Some(t) = theta_out[p] {
                ts.push(t);
                s += usize::from(x);
            }
        }
        if ts.is_empty() {
            continue;
        }
        let target = (s as f64).clamp(0.5, ts.len() as f64 - 0.5);
        b_out[i] = Some(solve_expected_score(&ts, target, -1.0));
        extreme_items.insert(m.items[i].clone());
    }
    // Persons whose only responses were to placed items.
    for p in 0..n_p {
        if theta_out[p].is_some() {
            continue;
        }
        let mut bs = Vec::new();
        let mut s = 0usize;
        for &k in &m.by_person[p] {
            let (_, i, x) = m.obs[k];
            if let Some(bi) = b_out[i] {
                bs.push(bi);
                s += usize::from(x);
            }
        }
        if !bs.is_empty() {
            let target = (s as f64).clamp(0.5, bs.len() as f64 - 0.5);
            theta_out[p] = Some(solve_expected_score(&bs, target, 1.0));
            extreme_persons.insert(m.persons[p].clone());
        }
    }

    Ok(CalibrationResult {
        b: m.items
            .iter()
            .zip(&b_out)
            .filter_map(|(id, v)| v.map(|v| (id.clone(), v)))
            .collect(),
        theta: m
            .persons
            .iter()
            .zip(&theta_out)
            .filter_map(|(id, v)| v.map(|v| (id.clone(), v)))
            .collect(),
        converged,
        iterations,
        log_likelihood,
        log_likelihood_trace: trace,
        extreme_items,
        extreme_persons,
    })
}

fn center(b: &mut [f64], theta: &mut [f64], active_i: &[bool], active_p: &[bool]) {
    let (sum, n) = b
        .iter()
        .zip(active_i)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        return;
    }
    let shift = sum / n as f64;
    for (v, _) in b.iter_mut().zip(active_i).filter(|(_, &a)| a) {
        *v -= shift;
    }
    for (v, _) in theta.iter_mut().zip(active_p).filter(|(_, &a)| a) {
        *v -= shift;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, SynthSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n_p: usize, n_i: usize, seed: u64) -> ResponseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..n_p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n_i).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut obs = Vec::new();
        for p in 0..n_p {
            for i in 0..n_i {
                obs.push((p, i, rng.random_bool(sigmoid(theta[p] - b[i]))));
            }
        }
        ResponseMatrix::new(
            (0..n_p).map(|p| format!("P{p}")).collect(),
            (0..n_i).map(|i| format!("I{i}")).collect(),
            obs,
        )
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = random_matrix(30, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let theta: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (gt, gb) = m.gradient(&theta, &b);
        let h = 1e-5;
        for p in 0..30 {
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let fd = (m.log_likelihood(&tp, &b) - m.log_likelihood(&tm, &b)) / (2.0 * h);
            assert!((fd - gt[p]).abs() <= 1e-4 * gt[p].abs().max(1e-3), "theta {p}: {fd} vs {}", gt[p]);
        }
        for i in 0..8 {
            let mut bp = b.clone();
            bp[i] += h;
            let mut bm = b.clone();
            bm[i] -= h;
            let fd = (m.log_likelihood(&theta, &bp) - m.log_likelihood(&theta, &bm)) / (2.0 * h);
            assert!((fd - gb[i]).abs() <= 1e-4 * gb[i].abs().max(1e-3), "b {i}: {fd} vs {}", gb[i]);
        }
    }

    #[test]
    fn likelihood_never_decreases_and_b_is_centered() {
        let m = random_matrix(200, 15, 8);
        let cal = calibrate_matrix(&m, &RaschOptions::default()).unwrap();
        assert!(cal.converged);
        for w in cal.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let estimated: Vec<f64> = cal
            .b
            .iter()
            .filter(|(id, _)| !cal.extreme_items.contains(*id))
            .map(|(_, v)| *v)
            .collect();
        assert!(estimated.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn identical_columns_get_identical_difficulty() {
        let base = random_matrix(100, 5, 1);
        let mut obs: Vec<(usize, usize, bool)> = base.obs.clone();
        for &(p, i, x) in &base.obs {
            if i == 2 {
                obs.push((p, 5, x));
            }
        }
        let mut items = base.items.clone();
        items.push("copy".into());
        let m = ResponseMatrix::new(base.persons.clone(), items, obs);
        let cal = calibrate_matrix(&m, &RaschOptions::default()).unwrap();
        assert!((cal.b["I2"] - cal.b["copy"]).abs() < 1e-4);
    }

    #[test]
    fn item_order_does_not_matter() {
        let m = random_matrix(150, 6, 2);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let inv: Vec<usize> = (0..6).map(|i| perm.iter().position(|&x| x == i).unwrap()).collect();
        let items: Vec<String> = perm.iter().map(|&i| m.items[i].clone()).collect();
        let obs = m.obs.iter().map(|&(p, i, x)| (p, inv[i], x)).collect();
        let permuted = ResponseMatrix::new(m.persons.clone(), items, obs);
        let a = calibrate_matrix(&m, &RaschOptions::default()).unwrap();
        let b = calibrate_matrix(&permuted, &RaschOptions::default()).unwrap();
        for (id, v) in &a.b {
            assert!((v - b.b[id]).abs() < 1e-8, "{id}");
        }
    }

    #[test]
    fn extreme_scores_use_half_point_rule() {
        // P3 answers everything correctly; item I0 is answered by everybody.
        let mut obs = Vec::new();
        let pattern = [
            [true, true, false, false],
            [true, false, true, false],
            [true, true, true, true],
            [true, false, false, true],
            [true, true, false, false],
        ];
        for (p, row) in pattern.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                obs.push((p, i, x));
            }
        }
        let m = ResponseMatrix::new(
            (0..5).map(|p| format!("P{p}")).collect(),
            (0..4).map(|i| format!("I{i}")).collect(),
            obs,
        );
        let cal = calibrate_matrix(&m, &RaschOptions::default()).unwrap();
        assert!(cal.extreme_persons.contains("P2"));
        assert!(cal.extreme_items.contains("I0"));
        // P2 is placed at a score of 2.5 out of 3 on the estimable items.
        let bs: Vec<f64> = ["I1", "I2", "I3"].iter().map(|i| cal.b[*i]).collect();
        let expected: f64 = bs.iter().map(|b| sigmoid(cal.theta["P2"] - b)).sum();
        assert!((expected - 2.5).abs() < 1e-8, "{expected}");
        // I0 sits below every other item.
        assert!(bs.iter().all(|&b| cal.b["I0"] < b));
    }

    #[test]
    fn all_extreme_is_an_error() {
        let m = ResponseMatrix::new(
            vec!["P0".into(), "P1".into()],
            vec!["I0".into()],
            vec![(0, 0, true), (1, 0, true)],
        );
        assert!(matches!(
            calibrate_matrix(&m, &RaschOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = random_matrix(100, 10, 3);
        let cal = calibrate_matrix(&m, &RaschOptions { tol: 1e-12, max_iter: 2 }).unwrap();
        assert!(!cal.converged);
        assert_eq!(cal.iterations, 2);
    }

    #[test]
    fn recovers_generating_difficulties() {
        let (ds, truth) = generate_synthetic(&SynthSpec::rasch_only(20, 600), 17).unwrap();
        let cal = rasch_calibrate(&ds, &RaschOptions::default()).unwrap();
        let ids: Vec<&String> = cal.b.keys().collect();
        let est: Vec<f64> = ids.iter().map(|id| cal.b[*id]).collect();
        let tru: Vec<f64> = ids.iter().map(|id| truth.item_b[*id]).collect();
        let r = crate::numeric::pearson(&est, &tru).unwrap();
        assert!(r > 0.97, "r = {r}");
    }
}
