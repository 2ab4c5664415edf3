//! Fixed-step classical Runge-Kutta for complex linear systems.

use num_complex::Complex;

use crate::scalar::Scalar;

pub(crate) struct Rk4<T: Scalar> {
    k1: Vec<Complex<T>>,
    k2: Vec<Complex<T>>,
    k3: Vec<Complex<T>>,
    k4: Vec<Complex<T>>,
    tmp: Vec<Complex<T>>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(len: usize) -> Self {
        let z = vec![Complex::new(T::zero(), T::zero()); len];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `x` by `h` under `dx/dt = f(x)`; `f` writes into its second argument.
    pub fn step<F>(&mut self, mut f: F, x: &mut [Complex<T>], h: T)
    where
        F: FnMut(&[Complex<T>], &mut [Complex<T>]),
    {
        let half = h * T::lit(0.5);
        f(x, &mut self.k1);
        axpy_into(&mut self.tmp, x, half, &self.k1);
        f(&self.tmp, &mut self.k2);
        axpy_into(&mut self.tmp, x, half, &self.k2);
        f(&self.tmp, &mut self.k3);
        axpy_into(&mut self.tmp, x, h, &self.k3);
        f(&self.tmp, &mut self.k4);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..x.len() {
            let incr = self.k1[i] + self.k2[i].scale(two) + self.k3[i].scale(two) + self.k4[i];
            x[i] += incr.scale(sixth);
        }
    }
}

fn axpy_into<T: Scalar>(out: &mut [Complex<T>], x: &[Complex<T>], a: T, y: &[Complex<T>]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = *xi + yi.scale(a);
    }
}
