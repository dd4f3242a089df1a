/// Weighted isotonic regression by pool-adjacent-violators.
///
/// Returns the non-decreasing `u` minimizing `sum w_l (v_l - u_l)²`.
/// Weights must be positive.
pub fn pava(v: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), w.len(), "values and weights differ in length");
    debug_assert!(w.iter().all(|&x| x > 0.0), "weights must be positive");
    // each block: (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(v.len());
    for (&val, &wt) in v.iter().zip(w) {
        let mut cur = (val, wt, 1usize);
        while let Some(&(m, ww, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let total = ww + cur.1;
            cur = ((m * ww + cur.0 * cur.1) / total, total, len + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, len)| std::iter::repeat_n(m, len))
        .collect()
}
