//! Dominant eigenpairs of symmetric positive semidefinite forms.
//!
//! Small dense matrices go through cyclic Jacobi sweeps (robust to clustered
//! eigenvalues); larger forms use power iteration with a deterministic start
//! and an explicit residual certificate `‖Av − λv‖`.

/// Dense symmetric matrix in row-major order.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `‖Av − λv‖₂` of the returned pair.
    pub residual: f64,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn residual_of(a: &SymMatrix, v: &[f64], lambda: f64) -> f64 {
    let mut av = vec![0.0; a.n];
    a.matvec(v, &mut av);
    av.iter()
        .zip(v)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Sign convention: first coordinate of largest magnitude is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut lead = 0.0;
    for &x in v.iter() {
        if x.abs() > lead.abs() {
            lead = x;
        }
    }
    if lead < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Full Jacobi eigen-decomposition, returning the dominant pair.
pub fn jacobi_top_eigenpair(a: &SymMatrix) -> EigenPair {
    let n = a.n;
    if n == 0 {
        return EigenPair {
            value: 0.0,
            vector: Vec::new(),
            residual: 0.0,
        };
    }
    let mut m = a.data.clone();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[idx(i, j)] * m[idx(i, j)];
            }
        }
        if off.sqrt() < 1e-15 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[idx(p, r)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(r, r)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[idx(k, p)];
                    let akq = m[idx(k, r)];
                    m[idx(k, p)] = c * akp - s * akq;
                    m[idx(k, r)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[idx(p, k)];
                    let aqk = m[idx(r, k)];
                    m[idx(p, k)] = c * apk - s * aqk;
                    m[idx(r, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let qkp = q[idx(k, p)];
                    let qkq = q[idx(k, r)];
                    q[idx(k, p)] = c * qkp - s * qkq;
                    q[idx(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }
    let mut best = 0usize;
    for i in 1..n {
        if m[idx(i, i)] > m[idx(best, best)] {
            best = i;
        }
    }
    let mut vector: Vec<f64> = (0..n).map(|k| q[idx(k, best)]).collect();
    normalize(&mut vector);
    canonical_sign(&mut vector);
    let value = m[idx(best, best)];
    let residual = residual_of(a, &vector, value);
    EigenPair {
        value,
        vector,
        residual,
    }
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration on a PSD operator given as a matvec closure.
///
/// Deterministic all-ones start, with one seeded random restart; the better
/// pair (by Rayleigh quotient) is returned with its residual.
pub fn power_top_eigenpair<F>(n: usize, matvec: F, tol: f64, max_iter: usize, seed: u64) -> EigenPair
where
    F: Fn(&[f64], &mut [f64]),
{
    use rand::Rng;
    use rand::SeedableRng;

    let run = |start: Vec<f64>| -> EigenPair {
        let mut v = start;
        normalize(&mut v);
        let mut av = vec![0.0; n];
        let mut lambda = 0.0;
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            matvec(&v, &mut av);
            lambda = v.iter().zip(&av).map(|(a, b)| a * b).sum();
            let res: f64 = av
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - lambda * y).powi(2))
                .sum::<f64>()
                .sqrt();
            residual = res;
            if res <= tol * lambda.abs().max(1.0) {
                break;
            }
            let norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                // operator annihilates v: eigenvalue 0
                return EigenPair {
                    value: 0.0,
                    vector: v,
                    residual: 0.0,
                };
            }
            for (slot, x) in v.iter_mut().zip(&av) {
                *slot = *x / norm;
            }
        }
        let mut vector = v;
        canonical_sign(&mut vector);
        EigenPair {
            value: lambda,
            vector,
            residual,
        }
    };

    let first = run(vec![1.0; n]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let random_start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let second = run(random_start);
    if second.value > first.value {
        second
    } else {
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_known_matrix() {
        // eigenvalues 3 and 1
        let mut a = SymMatrix::zeros(2);
        a.data = vec![2.0, 1.0, 1.0, 2.0];
        let pair = jacobi_top_eigenpair(&a);
        assert!((pair.value - 3.0).abs() < 1e-12);
        assert!(pair.residual < 1e-10);
        let invsq = 1.0 / 2f64.sqrt();
        assert!((pair.vector[0] - invsq).abs() < 1e-10);
        assert!((pair.vector[1] - invsq).abs() < 1e-10);
    }

    #[test]
    fn power_matches_jacobi() {
        let mut a = SymMatrix::zeros(3);
        for (i, j, v) in [(0, 0, 4.0), (1, 1, 2.5), (2, 2, 1.0), (0, 1, 0.7), (1, 2, 0.3)] {
            a.add(i, j, v);
        }
        let jac = jacobi_top_eigenpair(&a);
        let b = a.clone();
        let pow = power_top_eigenpair(3, move |x, out| b.matvec(x, out), 1e-12, 50_000, 1);
        assert!((jac.value - pow.value).abs() < 1e-9);
        assert!(pow.residual < 1e-10);
    }
}
