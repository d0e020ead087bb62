//! Quadrature rules and reference-element shape functions.
//!
//! One fixed volume rule is used everywhere: the 6-point degree-4 rule
//! on triangles, which integrates every product of two quadratic basis
//! functions exactly. Edge integrals use 3-point Gauss (degree 5).

/// 6-point degree-4 triangle rule on the reference triangle
/// {(0,0),(1,0),(0,1)}; weights sum to 1/2.
pub const TRI_QP: [( f64, f64, f64); 6] = {
    const A: f64 = 0.445_948_490_915_964_9;
    const B: f64 = 0.091_576_213_509_770_74;
    const WA: f64 = 0.111_690_794_839_005_74;
    const WB: f64 = 0.054_975_871_827_660_93;
    [
        (A, A, WA),
        (1.0 - 2.0 * A, A, WA),
        (A, 1.0 - 2.0 * A, WA),
        (B, B, WB),
        (1.0 - 2.0 * B, B, WB),
        (B, 1.0 - 2.0 * B, WB),
    ]
};

/// 3-point Gauss rule on [0,1]; weights sum to 1.
pub fn edge_gauss3() -> [(f64, f64); 3] {
    let s = (0.6f64).sqrt(); // sqrt(3/5)
    [
        (0.5 - 0.5 * s, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + 0.5 * s, 5.0 / 18.0),
    ]
}

/// Quadratic shape functions on the reference triangle at (x, y).
/// Node order: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0).
pub fn p2_shape(x: f64, y: f64) -> [f64; 6] {
    let l0 = 1.0 - x - y;
    let l1 = x;
    let l2 = y;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Reference gradients of the quadratic shape functions at (x, y).
pub fn p2_grad(x: f64, y: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - x - y;
    let l1 = x;
    let l2 = y;
    let d0 = [-1.0, -1.0];
    let d1 = [1.0, 0.0];
    let d2 = [0.0, 1.0];
    let mut g = [[0.0; 2]; 6];
    for k in 0..2 {
        g[0][k] = (4.0 * l0 - 1.0) * d0[k];
        g[1][k] = (4.0 * l1 - 1.0) * d1[k];
        g[2][k] = (4.0 * l2 - 1.0) * d2[k];
        g[3][k] = 4.0 * (l1 * d0[k] + l0 * d1[k]);
        g[4][k] = 4.0 * (l2 * d1[k] + l1 * d2[k]);
        g[5][k] = 4.0 * (l0 * d2[k] + l2 * d0[k]);
    }
    g
}

/// Linear shape functions on the reference triangle at (x, y).
pub fn p1_shape(x: f64, y: f64) -> [f64; 3] {
    [1.0 - x - y, x, y]
}

/// Quadratic trace functions on an edge, parametrized by t in [0,1]:
/// start vertex, end vertex, midpoint.
pub fn p2_edge_shape(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_rule_integrates_degree_four() {
        // exact integrals over the reference triangle: x^a y^b -> a! b! / (a+b+2)!
        let exact = |a: u32, b: u32| {
            let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
            fact(a) * fact(b) / fact(a + b + 2)
        };
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let num: f64 = TRI_QP.iter().map(|&(x, y, w)| w * x.powi(a as i32) * y.powi(b as i32)).sum();
                assert!(
                    (num - exact(a, b)).abs() < 3e-15,
                    "monomial x^{a} y^{b}: {num} vs {}",
                    exact(a, b)
                );
            }
        }
    }

    #[test]
    fn edge_rule_integrates_degree_five() {
        for p in 0..=5u32 {
            let num: f64 = edge_gauss3().iter().map(|&(t, w)| w * t.powi(p as i32)).sum();
            let exact = 1.0 / (p as f64 + 1.0);
            assert!((num - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_partition_of_unity_and_kronecker() {
        let nodes = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)];
        for (i, &(x, y)) in nodes.iter().enumerate() {
            let s = p2_shape(x, y);
            for (j, v) in s.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-14);
            }
        }
        let s = p2_shape(0.23, 0.41);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let g = p2_grad(0.23, 0.41);
        let sum = g.iter().fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        assert!(sum[0].abs() < 1e-13 && sum[1].abs() < 1e-13);
    }

    #[test]
    fn p2_grad_matches_finite_differences() {
        let h = 1e-6;
        let (x, y) = (0.31, 0.17);
        let g = p2_grad(x, y);
        let sx0 = p2_shape(x - h, y);
        let sx1 = p2_shape(x + h, y);
        let sy0 = p2_shape(x, y - h);
        let sy1 = p2_shape(x, y + h);
        for i in 0..6 {
            assert!(((sx1[i] - sx0[i]) / (2.0 * h) - g[i][0]).abs() < 1e-8);
            assert!(((sy1[i] - sy0[i]) / (2.0 * h) - g[i][1]).abs() < 1e-8);
        }
    }
}
