use super::{CrfModel, NUM_LABELS};
use crate::corpus::Label;
use crate::features::FeatureVector;

type Row = [f64; NUM_LABELS];

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-position emission scores, `score[t][y] = Σ_j w[y][j]`.
pub fn log_potentials(model: &CrfModel, features: &[FeatureVector]) -> Vec<Row> {
    features
        .iter()
        .map(|fv| {
            let mut row = [0.0; NUM_LABELS];
            for &j in fv.indices() {
                row[0] += model.emission(Label::Human, j);
                row[1] += model.emission(Label::Machine, j);
            }
            row
        })
        .collect()
}

/// Score of a single label path.
pub fn path_score(model: &CrfModel, features: &[FeatureVector], path: &[Label]) -> f64 {
    path_score_from(model, &log_potentials(model, features), path)
}

pub(crate) fn path_score_from(model: &CrfModel, pot: &[Row], path: &[Label]) -> f64 {
    let Some(first) = path.first() else {
        return 0.0;
    };
    let mut s = model.start[first.index()];
    for (t, y) in path.iter().enumerate() {
        s += pot[t][y.index()];
        if t > 0 {
            s += model.transition[path[t - 1].index()][y.index()];
        }
    }
    s + model.end[path[path.len() - 1].index()]
}

fn step(model: &CrfModel, prev: &Row, emit: &Row) -> Row {
    let mut out = [0.0; NUM_LABELS];
    for (y, o) in out.iter_mut().enumerate() {
        *o = lse2(
            prev[0] + model.transition[0][y],
            prev[1] + model.transition[1][y],
        ) + emit[y];
    }
    out
}

/// Forward variables `alpha[t][y]`, log-summed over every prefix ending in `y`.
pub(crate) fn forward(model: &CrfModel, pot: &[Row]) -> Vec<Row> {
    let mut alpha: Vec<Row> = Vec::with_capacity(pot.len());
    for (t, emit) in pot.iter().enumerate() {
        let row = if t == 0 {
            [model.start[0] + emit[0], model.start[1] + emit[1]]
        } else {
            step(model, &alpha[t - 1], emit)
        };
        alpha.push(row);
    }
    alpha
}

/// Backward variables, including the end weights.
pub(crate) fn backward(model: &CrfModel, pot: &[Row]) -> Vec<Row> {
    let n = pot.len();
    let mut beta = vec![[0.0; NUM_LABELS]; n];
    if n == 0 {
        return beta;
    }
    beta[n - 1] = model.end;
    for t in (0..n - 1).rev() {
        for y in 0..NUM_LABELS {
            beta[t][y] = lse2(
                model.transition[y][0] + pot[t + 1][0] + beta[t + 1][0],
                model.transition[y][1] + pot[t + 1][1] + beta[t + 1][1],
            );
        }
    }
    beta
}

pub(crate) fn log_z_from(model: &CrfModel, pot: &[Row]) -> f64 {
    if pot.is_empty() {
        return 0.0;
    }
    // streaming: only the previous row is kept
    let mut row = [model.start[0] + pot[0][0], model.start[1] + pot[0][1]];
    for emit in &pot[1..] {
        row = step(model, &row, emit);
    }
    lse2(row[0] + model.end[0], row[1] + model.end[1])
}

/// Log of the sum of exponentiated scores over all `2^L` label paths.
/// The empty sequence has log-partition 0.
pub fn log_partition(model: &CrfModel, features: &[FeatureVector]) -> f64 {
    log_z_from(model, &log_potentials(model, features))
}

pub(crate) fn marginals_from(alpha: &[Row], beta: &[Row], log_z: f64) -> Vec<Row> {
    alpha
        .iter()
        .zip(beta)
        .map(|(a, b)| {
            let p0 = (a[0] + b[0] - log_z).exp();
            let p1 = (a[1] + b[1] - log_z).exp();
            // renormalise away rounding drift
            let s = p0 + p1;
            [p0 / s, p1 / s]
        })
        .collect()
}

/// Posterior label probabilities per position (forward-backward).
pub fn marginals(model: &CrfModel, features: &[FeatureVector]) -> Vec<Row> {
    let pot = log_potentials(model, features);
    let alpha = forward(model, &pot);
    let beta = backward(model, &pot);
    let log_z = log_z_from(model, &pot);
    marginals_from(&alpha, &beta, log_z)
}

/// Maximum-score label path.
///
/// Ties are resolved toward `Human`: at every position the back-pointer
/// prefers the human predecessor unless the machine one is strictly better,
/// and the final label is human unless machine is strictly better.
pub fn viterbi(model: &CrfModel, features: &[FeatureVector]) -> Vec<Label> {
    viterbi_from(model, &log_potentials(model, features))
}

pub(crate) fn viterbi_from(model: &CrfModel, pot: &[Row]) -> Vec<Label> {
    let n = pot.len();
    if n == 0 {
        return Vec::new();
    }
    let mut back = vec![[0u8; NUM_LABELS]; n];
    let mut delta = [model.start[0] + pot[0][0], model.start[1] + pot[0][1]];
    for t in 1..n {
        let mut next = [0.0; NUM_LABELS];
        for y in 0..NUM_LABELS {
            let from_h = delta[0] + model.transition[0][y];
            let from_m = delta[1] + model.transition[1][y];
            let (best, arg) = if from_m > from_h {
                (from_m, 1)
            } else {
                (from_h, 0)
            };
            next[y] = best + pot[t][y];
            back[t][y] = arg;
        }
        delta = next;
    }
    let fin_h = delta[0] + model.end[0];
    let fin_m = delta[1] + model.end[1];
    let mut y = if fin_m > fin_h { 1 } else { 0 };
    let mut path = vec![Label::Human; n];
    for t in (0..n).rev() {
        path[t] = Label::from_index(y);
        y = back[t][y] as usize;
    }
    path
}

/// Per-position argmax of the posterior marginals (ties → human).
pub fn posterior_decode(model: &CrfModel, features: &[FeatureVector]) -> Vec<Label> {
    marginals(model, features)
        .iter()
        .map(|p| {
            if p[1] > p[0] {
                Label::Machine
            } else {
                Label::Human
            }
        })
        .collect()
}
