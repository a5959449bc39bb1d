//! Rank statistics. Spearman is the primary correlation; Kendall τ-b is
//! available behind a flag.

/// 1-based average ranks: tied values share the mean of the positions they
/// occupy. Ranks are exact binary fractions (halves), so equal inputs always
/// produce bit-identical ranks. Panics on NaN.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
///
/// Returns None when fewer than 3 pairs, when either side has zero variance,
/// or when any input is NaN. Perfectly monotone inputs return exactly ±1.0:
/// identical rank vectors short-circuit to 1.0, exactly mirrored ranks
/// (rx[i] + ry[i] == n+1 for all i) to -1.0.
///
/// The arithmetic below is the canonical shape (sequential sums in index
/// order, deviations against sum/n means, sxy / sqrt(sxx*syy)); conformance
/// tests reproduce it with independently computed ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

/// Pearson on rank vectors, with the exact monotone fast paths.
pub fn pearson(rx: &[f64], ry: &[f64]) -> Option<f64> {
    let n = rx.len();
    let constant = |r: &[f64]| r.iter().all(|&v| v == r[0]);
    if constant(rx) || constant(ry) {
        return None;
    }
    if rx == ry {
        return Some(1.0);
    }
    let flip = (n + 1) as f64;
    if rx.iter().zip(ry).all(|(&a, &b)| a + b == flip) {
        return Some(-1.0);
    }
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((sxy / denom).clamp(-1.0, 1.0))
}

/// Kendall τ-b (tie-adjusted), O(n²). None below 3 pairs, on NaN, or when
/// either side is entirely tied.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return None;
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return None;
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut tied_x = 0u64;
    let mut tied_y = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].partial_cmp(&xs[j]).unwrap();
            let dy = ys[i].partial_cmp(&ys[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Equal, _) => tied_x += 1,
                (_, Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n as u64 * (n as u64 - 1)) / 2;
    let dx = (n0 - tied_x) as f64;
    let dy = (n0 - tied_y) as f64;
    let denom = (dx * dy).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some(((concordant as f64 - discordant as f64) / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(average_ranks(&[10.0, 10.0, 30.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0, 1.0]), vec![3.0, 3.0, 3.0, 1.0]);
        assert_eq!(average_ranks(&[]), Vec::<f64>::new());
    }

    #[test]
    fn monotone_is_exactly_one() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 4.0, 8.0, 16.0, 32.0];
        assert_eq!(spearman(&xs, &ys), Some(1.0));
        let rev: Vec<f64> = ys.iter().rev().cloned().collect();
        assert_eq!(spearman(&xs, &rev), Some(-1.0));
        // Ties on both sides in matching places still rank identically.
        let xt = [1.0, 1.0, 3.0, 4.0];
        let yt = [10.0, 10.0, 30.0, 40.0];
        assert_eq!(spearman(&xt, &yt), Some(1.0));
    }

    #[test]
    fn degenerate_inputs_are_none() {
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), None);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[f64::NAN, 2.0, 3.0]), None);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn known_spearman_value() {
        // Ranks x: 1,2,3,4,5; ranks y: 2,1,4,3,5 -> rho = 1 - 6*4/(5*24) = 0.8
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [20.0, 10.0, 40.0, 30.0, 50.0];
        let rho = spearman(&xs, &ys).unwrap();
        assert!((rho - 0.8).abs() < 1e-12, "got {rho}");
    }

    #[test]
    fn kendall_reference_points() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau_b(&xs, &[1.0, 2.0, 3.0, 4.0]), Some(1.0));
        assert_eq!(kendall_tau_b(&xs, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        // One discordant pair of six: tau = (5-1)/6
        let tau = kendall_tau_b(&xs, &[1.0, 2.0, 4.0, 3.0]).unwrap();
        assert!((tau - 4.0 / 6.0).abs() < 1e-12, "got {tau}");
        assert_eq!(kendall_tau_b(&xs[..2], &xs[..2]), None);
        assert_eq!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }
}
