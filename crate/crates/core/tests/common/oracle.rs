//! Brute-force agreement statistics over a confusion table, written
//! independently of the library code they check.

/// Confusion counts over the positions both annotators scored.
/// `None` when no such position exists.
pub fn confusion(
    a: &[Option<u8>],
    b: &[Option<u8>],
    categories: &[u8],
) -> Option<(Vec<Vec<f64>>, f64)> {
    let q = categories.len();
    let mut table = vec![vec![0.0; q]; q];
    let mut n = 0.0;
    for i in 0..a.len() {
        if let (Some(x), Some(y)) = (a[i], b[i]) {
            let r = categories
                .iter()
                .position(|c| *c == x)
                .expect("score in categories");
            let c = categories
                .iter()
                .position(|c| *c == y)
                .expect("score in categories");
            table[r][c] += 1.0;
            n += 1.0;
        }
    }
    (n > 0.0).then_some((table, n))
}

pub fn percent(a: &[Option<u8>], b: &[Option<u8>], categories: &[u8]) -> Option<f64> {
    let (t, n) = confusion(a, b, categories)?;
    let mut diag = 0.0;
    for (k, row) in t.iter().enumerate() {
        diag += row[k];
    }
    Some(diag / n)
}

fn row_sum(t: &[Vec<f64>], k: usize) -> f64 {
    t[k].iter().sum()
}

fn col_sum(t: &[Vec<f64>], k: usize) -> f64 {
    t.iter().map(|row| row[k]).sum()
}

/// `None` when undefined (no overlap or expected agreement of 1).
pub fn kappa(a: &[Option<u8>], b: &[Option<u8>], categories: &[u8]) -> Option<f64> {
    let (t, n) = confusion(a, b, categories)?;
    let po = percent(a, b, categories)?;
    let mut pe = 0.0;
    for k in 0..categories.len() {
        pe += (row_sum(&t, k) / n) * (col_sum(&t, k) / n);
    }
    if (pe - 1.0).abs() < 1e-12 {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

pub fn ac1(a: &[Option<u8>], b: &[Option<u8>], categories: &[u8]) -> Option<f64> {
    let (t, n) = confusion(a, b, categories)?;
    let po = percent(a, b, categories)?;
    let q = categories.len() as f64;
    let mut pe = 0.0;
    for k in 0..categories.len() {
        let pi = (row_sum(&t, k) + col_sum(&t, k)) / (2.0 * n);
        pe += pi * (1.0 - pi);
    }
    pe /= q - 1.0;
    if (pe - 1.0).abs() < 1e-12 {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

/// Deterministic rating pair: `items` scores per annotator in `0..=3`.
pub fn seeded_pair(seed: u64, items: usize) -> (Vec<u8>, Vec<u8>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<u8> = (0..items).map(|_| rng.random_range(0..=3)).collect();
    // correlated second annotator so kappa spans a useful range
    let b: Vec<u8> = a
        .iter()
        .map(|&x| {
            if rng.random_bool(0.6) {
                x
            } else {
                rng.random_range(0..=3)
            }
        })
        .collect();
    (a, b)
}

pub fn some(v: &[u8]) -> Vec<Option<u8>> {
    v.iter().map(|x| Some(*x)).collect()
}
