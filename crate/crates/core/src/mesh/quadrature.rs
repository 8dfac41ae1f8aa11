use super::MeshError;

/// Gauss-Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.reverse();
    rule
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Symmetric triangle rule exact for polynomials of degree `order`, as
/// `(lambda_1, lambda_2, weight)` in barycentric coordinates with weights
/// summing to one.
pub fn triangle_rule(order: usize) -> Result<Vec<(f64, f64, f64)>, MeshError> {
    let mut rule = Vec::new();
    let orbit3 = |a: f64, w: f64, rule: &mut Vec<(f64, f64, f64)>| {
        let b = 1.0 - 2.0 * a;
        rule.extend([(a, a, w), (b, a, w), (a, b, w)]);
    };
    match order {
        0 | 1 => rule.push((1.0 / 3.0, 1.0 / 3.0, 1.0)),
        2 => orbit3(1.0 / 6.0, 1.0 / 3.0, &mut rule),
        3 | 4 => {
            orbit3(0.445948490915965, 0.223381589678011, &mut rule);
            orbit3(0.091576213509771, 0.109951743655322, &mut rule);
        }
        5 => {
            rule.push((1.0 / 3.0, 1.0 / 3.0, 0.225));
            orbit3(0.470142064105115, 0.132394152788506, &mut rule);
            orbit3(0.101286507323456, 0.125939180544827, &mut rule);
        }
        6 => {
            orbit3(0.249286745170910, 0.116786275726379, &mut rule);
            orbit3(0.063089014491502, 0.050844906370207, &mut rule);
            let (a, b, w) = (0.310352451033784, 0.053145049844817, 0.082851075618374);
            let c = 1.0 - a - b;
            rule.extend([(a, b, w), (b, a, w), (a, c, w), (c, a, w), (b, c, w), (c, b, w)]);
        }
        _ => return Err(MeshError::UnsupportedQuadrature(order)),
    }
    Ok(rule)
}
