//! Small descriptive-statistics helpers shared across modules.

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    values.iter().fold(None, |acc, &v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Bin index of `x` among `bins` equal-width bins over `[lo, hi]`, with the
/// upper edge belonging to the last bin. Values outside the range clamp to
/// the end bins.
pub fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let pos = ((x - lo) / (hi - lo) * bins as f64).floor();
    if pos <= 0.0 {
        0
    } else {
        (pos as usize).min(bins - 1)
    }
}

pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[bin_index(v, lo, hi, bins)] += 1;
    }
    counts
}

pub fn bin_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + (hi - lo) * i as f64 / bins as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_edge_lands_in_last_bin() {
        assert_eq!(bin_index(10.0, 0.0, 10.0, 4), 3);
        assert_eq!(bin_index(0.0, 0.0, 10.0, 4), 0);
        assert_eq!(bin_index(5.0, 0.0, 10.0, 4), 2);
        assert_eq!(histogram(&[0.0, 2.5, 5.0, 7.5, 10.0], 0.0, 10.0, 4), vec![1, 1, 1, 2]);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(variance(&[0.0, 1.0, 2.0, 3.0]), 1.25);
        assert_eq!(min_max(&[3.0, -1.0, 2.0]), Some((-1.0, 3.0)));
        assert_eq!(bin_edges(0.0, 1.0, 4), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
