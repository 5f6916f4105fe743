//! Direction sets on the unit sphere.

use nalgebra::Vector3;

/// Bound on the geodesic covering radius of [`fibonacci_lattice`]:
/// every point of the sphere lies within `COVERING_CONSTANT / sqrt(n)`
/// radians of some lattice point. Measured worst case is about 2.72.
pub const COVERING_CONSTANT: f64 = 3.0;

/// `n` near-uniform points, `z_i = 1 - (2i+1)/n`, golden-angle longitudes.
pub fn fibonacci_lattice(n: usize) -> Vec<Vector3<f64>> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n).map(|i| fibonacci_point(i, n, golden)).collect()
}

#[inline]
fn fibonacci_point(i: usize, n: usize, golden: f64) -> Vector3<f64> {
    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * (i as f64 / golden).fract();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

pub fn covering_radius(n: usize) -> f64 {
    COVERING_CONSTANT / (n as f64).sqrt()
}

/// `+-x, +-y, +-z`.
pub fn axis_directions() -> Vec<Vector3<f64>> {
    vec![
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ]
}

pub fn from_spherical(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    #[test]
    fn lattice_points_are_unit() {
        for p in fibonacci_lattice(500) {
            assert!((p.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn covering_radius_bound_holds_empirically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[100usize, 1000, 5000] {
            let lattice = fibonacci_lattice(n);
            let mut probes: Vec<Vector3<f64>> = (0..20_000)
                .map(|_| Vector3::from(UnitSphere.sample(&mut rng)))
                .collect();
            probes.push(Vector3::z());
            probes.push(-Vector3::z());
            let worst = probes
                .iter()
                .map(|q| {
                    lattice
                        .iter()
                        .map(|p| p.dot(q).clamp(-1.0, 1.0).acos())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            assert!(worst <= covering_radius(n), "n={n}: {worst} > {}", covering_radius(n));
        }
    }
}
