//! Parameter initialisation.

use rand::Rng;
use rand_distr::StandardNormal;

/// Fills `w` (`[inp × out]`, row-major) with a scaled orthogonal matrix:
/// orthonormal columns when `inp ≥ out`, orthonormal rows otherwise.
///
/// A Gaussian matrix is orthonormalised with modified Gram–Schmidt; for the
/// shapes used here (at most a few hundred on a side) that is accurate to
/// a few ulps of 1 and cheap next to training.
pub fn orthogonal<R: Rng>(w: &mut [f64], inp: usize, out: usize, gain: f64, rng: &mut R) {
    assert_eq!(w.len(), inp * out);
    let (long, short) = (inp.max(out), inp.min(out));
    // Column-major basis: `short` vectors of length `long`.
    let mut q: Vec<f64> = (0..long * short).map(|_| rng.sample(StandardNormal)).collect();
    for j in 0..short {
        let (done, rest) = q.split_at_mut(j * long);
        let v = &mut rest[..long];
        for i in 0..j {
            let u = &done[i * long..(i + 1) * long];
            let proj: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (x, a) in v.iter_mut().zip(u) {
                *x -= proj * a;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    for r in 0..inp {
        for c in 0..out {
            w[r * out + c] = gain
                * if inp >= out {
                    q[c * long + r]
                } else {
                    q[r * long + c]
                };
        }
    }
}

/// He-uniform: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform<R: Rng>(w: &mut [f64], fan_in: usize, rng: &mut R) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for x in w {
        *x = rng.random_range(-limit..limit);
    }
}
