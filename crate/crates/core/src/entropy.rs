//! Entropy helpers in bits with the `0 log 0 = 0` convention.

/// Entropy of a probability vector, in bits.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum()
}

/// Binary entropy `H2(a)`.
pub fn h2(a: f64) -> f64 {
    entropy(&[a, 1.0 - a])
}

/// Ternary entropy `H3(a1, a2)` with the third mass `1 - a1 - a2`.
pub fn h3(a1: f64, a2: f64) -> f64 {
    entropy(&[a1, a2, 1.0 - a1 - a2])
}

/// Quaternary entropy `H4(a1, a2, a3)`.
pub fn h4(a1: f64, a2: f64, a3: f64) -> f64 {
    entropy(&[a1, a2, a3, 1.0 - a1 - a2 - a3])
}

/// Entropy of `p` normalized by `mass`, weighted by `mass`: `mass * H(p / mass)`.
///
/// Accumulating these terms yields conditional entropies directly from a joint.
pub(crate) fn weighted_entropy(p: &[f64]) -> f64 {
    let mass: f64 = p.iter().sum();
    if mass <= 0.0 {
        return 0.0;
    }
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * (v / mass).log2())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_entropy_endpoints() {
        assert_eq!(h2(0.0), 0.0);
        assert_eq!(h2(1.0), 0.0);
        assert!((h2(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_matches_definition() {
        let p = [0.1, 0.2, 0.05];
        let m: f64 = p.iter().sum();
        let direct = m * entropy(&p.map(|v| v / m));
        assert!((weighted_entropy(&p) - direct).abs() < 1e-14);
    }

    #[test]
    fn ternary_identity_on_grid() {
        // H3((1-d)g, (1-d)(1-g)) = H2(d) + (1-d) H2(g)
        for i in 0..=20 {
            for j in 0..=20 {
                let d = i as f64 / 20.0;
                let g = j as f64 / 20.0;
                let lhs = h3((1.0 - d) * g, (1.0 - d) * (1.0 - g));
                let rhs = h2(d) + (1.0 - d) * h2(g);
                assert!((lhs - rhs).abs() < 1e-12, "d={d} g={g}");
            }
        }
    }

    #[test]
    fn quaternary_reduces() {
        assert!((h4(0.25, 0.25, 0.25) - 2.0).abs() < 1e-15);
        assert!((h4(0.5, 0.5, 0.0) - 1.0).abs() < 1e-15);
    }
}
