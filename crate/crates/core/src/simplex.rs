//! Regular grids on the probability simplex and a grid-plus-pattern-search
//! optimizer over its epsilon-interior.

use crate::distribution::Distribution;
use crate::error::{not_nan, Error, Result};

/// Number of cells a grid step divides `[0, 1]` into.
pub fn divisions_for_step(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step {step} must lie in (0, 1]"
        )));
    }
    let cells = (1.0 / step).round();
    if (cells * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid step {step} does not divide 1 into an integer number of cells"
        )));
    }
    Ok(cells as usize)
}

/// All compositions of `total` into `parts` nonnegative integers, in
/// lexicographic order.
fn compositions(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=total {
            prefix.push(k);
            rec(parts - 1, total - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

fn to_distribution(counts: &[usize], cells: usize) -> Distribution {
    let probs = counts.iter().map(|&c| c as f64 / cells as f64).collect();
    Distribution::new(probs).expect("grid points lie on the simplex")
}

/// Every grid point of the simplex with the given step, boundary included.
pub fn simplex_grid(outcomes: usize, step: f64) -> Result<Vec<Distribution>> {
    let cells = divisions_for_step(step)?;
    Ok(compositions(outcomes, cells)
        .iter()
        .map(|c| to_distribution(c, cells))
        .collect())
}

/// Grid points with every entry strictly positive.
pub fn interior_grid(outcomes: usize, step: f64) -> Result<Vec<Distribution>> {
    let cells = divisions_for_step(step)?;
    Ok(compositions(outcomes, cells)
        .iter()
        .filter(|c| c.iter().all(|&k| k > 0))
        .map(|c| to_distribution(c, cells))
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Extremum of `f` over `{p : p_i >= eps}`.
///
/// A coarse grid (vertices included, so corner optima are hit exactly) seeds
/// a pairwise mass-transfer pattern search that halves its step down to
/// `1e-13`.
pub fn interior_extremum<F>(outcomes: usize, eps: f64, maximize: bool, f: F) -> Result<f64>
where
    F: Fn(&Distribution) -> Result<f64>,
{
    if outcomes < 2 {
        return Err(Error::InvalidParameter("need at least 2 outcomes".into()));
    }
    if !(eps >= 0.0 && eps * (outcomes as f64) < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {eps} must lie in [0, 1/{outcomes})"
        )));
    }
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let span = 1.0 - outcomes as f64 * eps;

    let mut cells = 2;
    while binomial(cells + 1 + outcomes - 1, outcomes - 1) <= 20_000.0 && cells < 200 {
        cells += 1;
    }

    let map = |counts: &[usize]| -> Vec<f64> {
        counts
            .iter()
            .map(|&c| eps + span * c as f64 / cells as f64)
            .collect()
    };
    let eval = |probs: &[f64]| -> Result<f64> {
        let d = Distribution::new(probs.to_vec())?;
        not_nan(f(&d)?, "simplex search")
    };

    let mut best_point: Vec<f64> = Vec::new();
    let mut best = if maximize {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    for counts in compositions(outcomes, cells) {
        let p = map(&counts);
        let v = eval(&p)?;
        if best_point.is_empty() || better(v, best) {
            best = v;
            best_point = p;
        }
    }

    let mut step = span / cells as f64;
    let mut point = best_point;
    while step > 1e-13 {
        let mut improved = false;
        for from in 0..outcomes {
            for to in 0..outcomes {
                if from == to {
                    continue;
                }
                let delta = step.min(point[from] - eps);
                if delta <= 0.0 {
                    continue;
                }
                let mut trial = point.clone();
                trial[from] -= delta;
                trial[to] += delta;
                let v = eval(&trial)?;
                if better(v, best) {
                    best = v;
                    point = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(simplex_grid(2, 0.05).unwrap().len(), 21);
        assert_eq!(simplex_grid(3, 0.05).unwrap().len(), 231);
        assert_eq!(interior_grid(2, 0.05).unwrap().len(), 19);
        assert_eq!(interior_grid(3, 0.05).unwrap().len(), 171);
        assert!(divisions_for_step(0.3).is_err());
        assert!(divisions_for_step(0.0).is_err());
    }

    #[test]
    fn finds_interior_maximum() {
        // -(p1 - 0.3)^2 - (p2 - 0.2)^2 peaks at [0.3, 0.2, 0.5].
        let v = interior_extremum(3, 0.0, true, |p| {
            let q = p.probs();
            Ok(-(q[0] - 0.3).powi(2) - (q[1] - 0.2).powi(2))
        })
        .unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn respects_the_epsilon_interior() {
        let v = interior_extremum(2, 0.1, true, |p| Ok(p.probs()[0])).unwrap();
        assert!((v - 0.9).abs() < 1e-12);
        let v = interior_extremum(4, 0.05, false, |p| Ok(p.probs()[2])).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
        assert!(interior_extremum(2, 0.5, true, |_| Ok(0.0)).is_err());
    }
}
