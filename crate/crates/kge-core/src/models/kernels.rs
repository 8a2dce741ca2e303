//! Low-level batched scoring kernels.
//!
//! Two kernel families back the grouped scorer: plain dot products
//! (DistMult, ComplEx, RESCAL) routed through `matrixmultiply`'s sgemm,
//! and distance kernels (TransE, RotatE, TransR) written as lane-wise
//! accumulation loops. The lane loops are compiled twice on x86_64, once
//! generic and once under `avx2,fma`, and the entry points pick the wide
//! version at runtime.

use matrixmultiply::sgemm;

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// score = -sum |a - b|
    L1,
    /// score = -sum (a - b)^2
    L2Sq,
    /// score = -sqrt(sum (a - b)^2)
    L2,
}

#[inline(always)]
fn hsum(acc: [f32; LANES]) -> f32 {
    // pairwise to keep the tree shallow
    let a = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (a[0] + a[1]) + (a[2] + a[3])
}

#[inline(always)]
fn dot_pair_body(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = xa[l].mul_add(xb[l], acc[l]);
        }
    }
    let mut s = hsum(acc);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[inline(always)]
fn l1_pair_body(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += (xa[l] - xb[l]).abs();
        }
    }
    let mut s = hsum(acc);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += (x - y).abs();
    }
    s
}

#[inline(always)]
fn l2sq_pair_body(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let e = xa[l] - xb[l];
            acc[l] = e.mul_add(e, acc[l]);
        }
    }
    let mut s = hsum(acc);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += (x - y) * (x - y);
    }
    s
}

/// out[i*k + j] = negated distance between row i of `o` and row j of `negs`.
#[inline(always)]
fn distance_scores_body(metric: Metric, o: &[f32], negs: &[f32], d: usize, out: &mut [f32]) {
    let k = negs.len().checked_div(d).unwrap_or(0);
    for (i, oi) in o.chunks_exact(d).enumerate() {
        let row = &mut out[i * k..(i + 1) * k];
        for (j, nj) in negs.chunks_exact(d).enumerate() {
            row[j] = match metric {
                Metric::L1 => -l1_pair_body(oi, nj),
                Metric::L2Sq => -l2sq_pair_body(oi, nj),
                Metric::L2 => -l2sq_pair_body(oi, nj).sqrt(),
            };
        }
    }
}

/// Accumulate distance-kernel gradients.
///
/// For each pair (i, j) with weight w = upstream[i*k+j], the gradient of
/// the negated distance w.r.t. o_i is accumulated into d_o and w.r.t.
/// neg_j into d_negs. `scores` is the forward output (needed to recover
/// the distance for the unsquared L2 without a second pass). Pairs with
/// zero weight are skipped, which makes the inactive-hinge case cheap.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn distance_grads_body(
    metric: Metric,
    o: &[f32],
    negs: &[f32],
    d: usize,
    upstream: &[f32],
    scores: &[f32],
    d_o: &mut [f32],
    d_negs: &mut [f32],
) {
    let k = negs.len().checked_div(d).unwrap_or(0);
    for (i, oi) in o.chunks_exact(d).enumerate() {
        let doi = &mut d_o[i * d..(i + 1) * d];
        for j in 0..k {
            let w = upstream[i * k + j];
            if w == 0.0 {
                continue;
            }
            let nj = &negs[j * d..(j + 1) * d];
            let dnj = &mut d_negs[j * d..(j + 1) * d];
            match metric {
                Metric::L1 => {
                    for c in 0..d {
                        let e = oi[c] - nj[c];
                        // subgradient 0 at the kink
                        let s = if e > 0.0 {
                            1.0
                        } else if e < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        doi[c] -= w * s;
                        dnj[c] += w * s;
                    }
                }
                Metric::L2Sq => {
                    for c in 0..d {
                        let e = oi[c] - nj[c];
                        doi[c] -= 2.0 * w * e;
                        dnj[c] += 2.0 * w * e;
                    }
                }
                Metric::L2 => {
                    let dist = (-scores[i * k + j]).max(1e-12);
                    let f = w / dist;
                    for c in 0..d {
                        let e = oi[c] - nj[c];
                        doi[c] -= f * e;
                        dnj[c] += f * e;
                    }
                }
            }
        }
    }
}

// x86_64 gets an avx2+fma compilation of each body; the #[inline(always)]
// bodies inline into the target_feature wrapper, so the compiler is free
// to vectorize them with the wider ISA.
#[cfg(target_arch = "x86_64")]
mod wide {
    use super::*;

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn distance_scores(
        metric: Metric,
        o: &[f32],
        negs: &[f32],
        d: usize,
        out: &mut [f32],
    ) {
        distance_scores_body(metric, o, negs, d, out)
    }

    #[target_feature(enable = "avx2,fma")]
    #[allow(clippy::too_many_arguments)]
    pub unsafe fn distance_grads(
        metric: Metric,
        o: &[f32],
        negs: &[f32],
        d: usize,
        upstream: &[f32],
        scores: &[f32],
        d_o: &mut [f32],
        d_negs: &mut [f32],
    ) {
        distance_grads_body(metric, o, negs, d, upstream, scores, d_o, d_negs)
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot(a: &[f32], b: &[f32]) -> f32 {
        dot_pair_body(a, b)
    }
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn use_wide() -> bool {
    std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
}

/// Dot product of two equal-length vectors.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if use_wide() {
        return unsafe { wide::dot(a, b) };
    }
    dot_pair_body(a, b)
}

/// L1 distance (not negated).
pub fn l1_distance(a: &[f32], b: &[f32]) -> f32 {
    l1_pair_body(a, b)
}

/// Squared L2 distance (not negated).
pub fn l2sq_distance(a: &[f32], b: &[f32]) -> f32 {
    l2sq_pair_body(a, b)
}

/// Fill `out` (g×k, row-major) with negated distances between rows of `o`
/// (g×d) and rows of `negs` (k×d).
pub fn distance_scores(metric: Metric, o: &[f32], negs: &[f32], d: usize, out: &mut [f32]) {
    debug_assert_eq!(o.len() % d.max(1), 0);
    debug_assert_eq!(negs.len() % d.max(1), 0);
    debug_assert_eq!(out.len(), (o.len() / d.max(1)) * (negs.len() / d.max(1)));
    #[cfg(target_arch = "x86_64")]
    if use_wide() {
        return unsafe { wide::distance_scores(metric, o, negs, d, out) };
    }
    distance_scores_body(metric, o, negs, d, out)
}

/// Accumulate distance gradients into `d_o` (g×d) and `d_negs` (k×d).
#[allow(clippy::too_many_arguments)]
pub fn distance_grads(
    metric: Metric,
    o: &[f32],
    negs: &[f32],
    d: usize,
    upstream: &[f32],
    scores: &[f32],
    d_o: &mut [f32],
    d_negs: &mut [f32],
) {
    #[cfg(target_arch = "x86_64")]
    if use_wide() {
        return unsafe {
            wide::distance_grads(metric, o, negs, d, upstream, scores, d_o, d_negs)
        };
    }
    distance_grads_body(metric, o, negs, d, upstream, scores, d_o, d_negs)
}

/// out (g×k) = o (g×d) · negsᵀ (d×k). Overwrites out.
pub fn dot_scores(o: &[f32], negs: &[f32], d: usize, out: &mut [f32]) {
    let g = o.len() / d;
    let k = negs.len() / d;
    debug_assert_eq!(out.len(), g * k);
    if g == 0 || k == 0 || d == 0 {
        return;
    }
    unsafe {
        sgemm(
            g,
            d,
            k,
            1.0,
            o.as_ptr(),
            d as isize,
            1,
            negs.as_ptr(),
            1,
            d as isize,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// d_o (g×d) += upstream (g×k) · negs (k×d).
pub fn dot_grad_o(upstream: &[f32], negs: &[f32], d: usize, d_o: &mut [f32]) {
    let g = d_o.len() / d;
    let k = negs.len() / d;
    debug_assert_eq!(upstream.len(), g * k);
    if g == 0 || k == 0 || d == 0 {
        return;
    }
    unsafe {
        sgemm(
            g,
            k,
            d,
            1.0,
            upstream.as_ptr(),
            k as isize,
            1,
            negs.as_ptr(),
            d as isize,
            1,
            1.0,
            d_o.as_mut_ptr(),
            d as isize,
            1,
        );
    }
}

/// d_negs (k×d) += upstreamᵀ (k×g) · o (g×d).
pub fn dot_grad_negs(upstream: &[f32], o: &[f32], d: usize, d_negs: &mut [f32]) {
    let g = o.len() / d;
    let k = d_negs.len() / d;
    debug_assert_eq!(upstream.len(), g * k);
    if g == 0 || k == 0 || d == 0 {
        return;
    }
    unsafe {
        sgemm(
            k,
            g,
            d,
            1.0,
            upstream.as_ptr(),
            1,
            k as isize,
            o.as_ptr(),
            d as isize,
            1,
            1.0,
            d_negs.as_mut_ptr(),
            d as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32).cos()).collect();
        let naive: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-5);
    }

    #[test]
    fn gemm_matches_per_pair_dots() {
        let d = 11;
        let g = 3;
        let k = 5;
        let o: Vec<f32> = (0..g * d).map(|i| ((i * 7 % 13) as f32) * 0.1 - 0.5).collect();
        let n: Vec<f32> = (0..k * d).map(|i| ((i * 5 % 17) as f32) * 0.1 - 0.7).collect();
        let mut out = vec![0.0; g * k];
        dot_scores(&o, &n, d, &mut out);
        for i in 0..g {
            for j in 0..k {
                let naive = dot(&o[i * d..(i + 1) * d], &n[j * d..(j + 1) * d]);
                assert!((out[i * k + j] - naive).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn distance_kernels_match_scalar() {
        let d = 9;
        let o: Vec<f32> = (0..2 * d).map(|i| (i as f32) * 0.05).collect();
        let n: Vec<f32> = (0..3 * d).map(|i| 1.0 - (i as f32) * 0.03).collect();
        let mut out = vec![0.0; 6];
        distance_scores(Metric::L1, &o, &n, d, &mut out);
        for i in 0..2 {
            for j in 0..3 {
                let s: f32 = (0..d)
                    .map(|c| (o[i * d + c] - n[j * d + c]).abs())
                    .sum();
                assert!((out[i * 3 + j] + s).abs() < 1e-5);
            }
        }
        distance_scores(Metric::L2, &o, &n, d, &mut out);
        for i in 0..2 {
            for j in 0..3 {
                let s: f32 = (0..d)
                    .map(|c| (o[i * d + c] - n[j * d + c]).powi(2))
                    .sum();
                assert!((out[i * 3 + j] + s.sqrt()).abs() < 1e-5);
            }
        }
    }
}
