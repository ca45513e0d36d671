//! Tensor-product Gauss-Legendre rules on the reference square.

/// One-dimensional Gauss-Legendre points and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Option<Vec<(f64, f64)>> {
    let rule = match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let r = (6.0f64 / 5.0).sqrt() * 2.0;
            let a = ((3.0 - r) / 7.0).sqrt();
            let b = ((3.0 + r) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        _ => return None,
    };
    Some(rule)
}

/// Points `([ξ, η], w)` of the `n x n` rule, row-major: η is the outer
/// index, ξ the inner one.
pub fn square_rule(n: usize) -> Option<Vec<([f64; 2], f64)>> {
    let line = gauss_legendre(n)?;
    let mut out = Vec::with_capacity(n * n);
    for &(eta, we) in &line {
        for &(xi, wx) in &line {
            out.push(([xi, eta], wx * we));
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_monomial(p: u32) -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            2.0 / (p as f64 + 1.0)
        }
    }

    #[test]
    fn integrates_monomials_exactly() {
        for (n, max_deg) in [(2usize, 3u32), (3, 5), (4, 7)] {
            let rule = square_rule(n).unwrap();
            for p in 0..=max_deg {
                for q in 0..=max_deg {
                    let approx: f64 = rule.iter().map(|([x, y], w)| w * x.powi(p as i32) * y.powi(q as i32)).sum();
                    let exact = exact_monomial(p) * exact_monomial(q);
                    assert!((approx - exact).abs() <= 1e-12, "n={n} p={p} q={q}: {approx} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn row_major_order() {
        let rule = square_rule(3).unwrap();
        assert!(rule[0].0[0] < rule[1].0[0]);
        assert_eq!(rule[0].0[1], rule[1].0[1]);
        assert!(rule[3].0[1] > rule[0].0[1]);
    }
}
