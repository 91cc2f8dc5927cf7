//! Forward-mode dual numbers carrying gradients and Hessians with respect
//! to a fixed, small number of variables. Element kernels are written once
//! over [`Real`] and evaluated with `f64`, [`Dual1`] or [`Dual2`].

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Value and gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual1<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
}

impl<const N: usize> Dual1<N> {
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; N];
        g[i] = 1.0;
        Dual1 { v, g }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        let mut g = self.g;
        for x in &mut g {
            *x *= df;
        }
        Dual1 { v: f, g }
    }
}

impl<const N: usize> Add for Dual1<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual1<N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
        }
        self
    }
}

impl<const N: usize> Neg for Dual1<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for x in &mut self.g {
            *x = -*x;
        }
        self
    }
}

impl<const N: usize> Mul for Dual1<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = self.v * o.g[i] + o.v * self.g[i];
        }
        Dual1 { v: self.v * o.v, g }
    }
}

impl<const N: usize> Div for Dual1<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        self * o.chain(inv, -inv * inv)
    }
}

impl<const N: usize> Real for Dual1<N> {
    fn cst(x: f64) -> Self {
        Dual1 { v: x, g: [0.0; N] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let (fy, fx) = (x.v / r2, -self.v / r2);
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = fy * self.g[i] + fx * x.g[i];
        }
        Dual1 { v: self.v.atan2(x.v), g }
    }
    fn scale(mut self, s: f64) -> Self {
        self.v *= s;
        for x in &mut self.g {
            *x *= s;
        }
        self
    }
}

/// Value, gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Dual2<N> {
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; N];
        g[i] = 1.0;
        Dual2 { v, g, h: [[0.0; N]; N] }
    }

    /// `f(self)` given `f`, `f'` and `f''` at the value.
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Dual2 { v: f, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = df * self.g[i];
            for j in 0..N {
                out.h[i][j] = df * self.h[i][j] + ddf * self.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for j in 0..N {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
            for j in 0..N {
                self.h[i][j] -= o.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Dual2 { v: self.v * o.v, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..N {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        self * o.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl<const N: usize> Real for Dual2<N> {
    fn cst(x: f64) -> Self {
        Dual2 { v: x, g: [0.0; N], h: [[0.0; N]; N] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.v, x.v);
        let r2 = y0 * y0 + x0 * x0;
        let r4 = r2 * r2;
        let (fy, fx) = (x0 / r2, -y0 / r2);
        let (fyy, fxx, fxy) = (-2.0 * x0 * y0 / r4, 2.0 * x0 * y0 / r4, (y0 * y0 - x0 * x0) / r4);
        let mut out = Dual2 { v: y0.atan2(x0), g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = fy * self.g[i] + fx * x.g[i];
            for j in 0..N {
                out.h[i][j] = fy * self.h[i][j]
                    + fx * x.h[i][j]
                    + fyy * self.g[i] * self.g[j]
                    + fxx * x.g[i] * x.g[j]
                    + fxy * (self.g[i] * x.g[j] + x.g[i] * self.g[j]);
            }
        }
        out
    }
    fn scale(mut self, s: f64) -> Self {
        self.v *= s;
        for i in 0..N {
            self.g[i] *= s;
            for j in 0..N {
                self.h[i][j] *= s;
            }
        }
        self
    }
}

/// Minimal 3-vector over a [`Real`].
#[derive(Debug, Clone, Copy)]
pub struct V3<T>(pub [T; 3]);

impl<T: Real> V3<T> {
    pub fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Self) -> Self {
        let (a, b) = (self.0, o.0);
        V3([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * y + T::cst(2.0)).ln() * y.atan2(x * x + T::cst(0.5)) / (x * x + y * y).sqrt()
    }

    #[test]
    fn derivatives_match_differences() {
        let (x0, y0) = (0.7, -0.4);
        let d = f(Dual2::<2>::var(x0, 0), Dual2::<2>::var(y0, 1));
        let d1 = f(Dual1::<2>::var(x0, 0), Dual1::<2>::var(y0, 1));
        assert_eq!(d.v, f(x0, y0));
        assert_eq!(d.g, d1.g);
        let h = 1e-5;
        let fd_x = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
        let fd_y = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
        assert!((d.g[0] - fd_x).abs() < 1e-9);
        assert!((d.g[1] - fd_y).abs() < 1e-9);
        let h = 1e-4;
        let fxx = (f(x0 + h, y0) - 2.0 * f(x0, y0) + f(x0 - h, y0)) / (h * h);
        let fxy = (f(x0 + h, y0 + h) - f(x0 + h, y0 - h) - f(x0 - h, y0 + h) + f(x0 - h, y0 - h)) / (4.0 * h * h);
        assert!((d.h[0][0] - fxx).abs() < 1e-6);
        assert!((d.h[0][1] - fxy).abs() < 1e-6);
        assert!((d.h[0][1] - d.h[1][0]).abs() < 1e-14);
    }
}
