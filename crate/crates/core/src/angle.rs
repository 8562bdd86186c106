use core::f64::consts::PI;

use num_traits::Float;

/// Reduces an angle in degrees to `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let mut r = deg % 360.0;
    if r < 0.0 {
        r += 360.0;
    }
    if r >= 360.0 {
        r -= 360.0;
    }
    r
}

/// Signed shortest arc from `from` to `to`, in `(-180, 180]`.
pub fn shortest_arc_deg(from: f64, to: f64) -> f64 {
    let d = normalize_deg(to - from);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// `(sin, cos)` of an angle in degrees.
///
/// The argument is reduced mod 360 before conversion to radians, and exact
/// quarter turns return exact values, so `cos(180°)` is `-1` and `sin(180°)`
/// is `0` rather than `1.2e-16`.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = normalize_deg(deg);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        let rad = r * PI / 180.0;
        (Float::sin(rad), Float::cos(rad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_into_range() {
        assert_eq!(normalize_deg(370.0), 10.0);
        assert_eq!(normalize_deg(-10.0), 350.0);
        assert_eq!(normalize_deg(-720.0), 0.0);
        let tiny = normalize_deg(-1e-20);
        assert!((0.0..360.0).contains(&tiny));
    }

    #[test]
    fn shortest_arc_wraps() {
        assert_eq!(shortest_arc_deg(10.0, 190.0), 180.0);
        assert_eq!(shortest_arc_deg(350.0, 10.0), 20.0);
        assert_eq!(shortest_arc_deg(10.0, 350.0), -20.0);
    }

    #[test]
    fn quarter_turns_are_exact() {
        assert_eq!(sin_cos_deg(180.0), (0.0, -1.0));
        assert_eq!(sin_cos_deg(-90.0), (-1.0, 0.0));
        assert_eq!(sin_cos_deg(720.0), (0.0, 1.0));
    }
}
