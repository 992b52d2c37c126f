use crate::scalar::Scalar;

/// Coefficients `(a, b, c)` of an explicit Runge-Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> ButcherTableau<T> {
    /// Classical fourth-order method: `a21 = a32 = 1/2`, `a43 = 1`,
    /// `b = (1/6, 1/3, 1/3, 1/6)`, `c = (0, 1/2, 1/2, 1)`.
    pub fn classical_rk4() -> Self {
        let z = T::zero();
        let h = T::lit(0.5);
        let o = T::one();
        Self {
            a: vec![
                vec![z, z, z, z],
                vec![h, z, z, z],
                vec![z, h, z, z],
                vec![z, z, o, z],
            ],
            b: vec![
                T::lit(1.0 / 6.0),
                T::lit(1.0 / 3.0),
                T::lit(1.0 / 3.0),
                T::lit(1.0 / 6.0),
            ],
            c: vec![z, h, h, o],
        }
    }

    pub fn forward_euler() -> Self {
        Self {
            a: vec![vec![T::zero()]],
            b: vec![T::one()],
            c: vec![T::zero()],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Explicit (strictly lower triangular `a`), weights summing to one and
    /// row sums equal to the abscissae.
    pub fn is_consistent(&self, tol: T) -> bool {
        let s = self.stages();
        if self.a.len() != s || self.c.len() != s || self.a.iter().any(|r| r.len() != s) {
            return false;
        }
        let explicit = (0..s).all(|j| (j..s).all(|k| self.a[j][k] == T::zero()));
        let bsum = self.b.iter().fold(T::zero(), |acc, &v| acc + v);
        let rows = (0..s).all(|j| {
            let sum = self.a[j].iter().fold(T::zero(), |acc, &v| acc + v);
            (sum - self.c[j]).abs() <= tol
        });
        explicit && (bsum - T::one()).abs() <= tol && rows
    }

    /// Stability function `R(z)` for `y' = lambda y`, `z = lambda dt`.
    pub fn stability_function(&self, z: T) -> T {
        // R(z) = 1 + z b^T (I - z A)^{-1} 1, evaluated by forward substitution.
        let s = self.stages();
        let mut k = vec![T::zero(); s];
        for j in 0..s {
            let mut acc = T::one();
            for (m, kv) in k.iter().enumerate().take(j) {
                acc = acc + z * self.a[j][m] * *kv;
            }
            k[j] = acc;
        }
        T::one() + z * self.b.iter().zip(&k).fold(T::zero(), |acc, (&b, &kv)| acc + b * kv)
    }
}
