//! Permeability fields and manufactured solutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Diagonal tensor field `K(x, y) = diag(kxx, kyy)` (permeability over viscosity).
#[derive(Clone)]
pub struct PermField {
    eval: VectorFn,
    pub kmin: f64,
    pub kmax: f64,
}

impl fmt::Debug for PermField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PermField").field("kmin", &self.kmin).field("kmax", &self.kmax).finish()
    }
}

impl PermField {
    pub fn new(kmin: f64, kmax: f64, eval: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), kmin, kmax }
    }

    pub fn scalar(k: f64) -> Self {
        Self::new(k, k, move |_, _| [k, k])
    }

    pub fn identity() -> Self {
        Self::scalar(1.0)
    }

    pub fn at(&self, p: [f64; 2]) -> [f64; 2] {
        (self.eval)(p[0], p[1])
    }

    /// Evaluate and reject nonpositive values.
    pub fn checked(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let k = self.at(p);
        if !(k[0] > 0.0 && k[1] > 0.0) || !k[0].is_finite() || !k[1].is_finite() {
            return Err(Error::NonPositivePermeability { x: p[0], y: p[1], kxx: k[0], kyy: k[1] });
        }
        Ok(k)
    }
}

/// Analytic pressure/velocity pair with matching source and Dirichlet data.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pressure: ScalarFn,
    velocity: VectorFn,
    source: ScalarFn,
    pub perm: PermField,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase").field("name", &self.name).field("perm", &self.perm).finish()
    }
}

impl ManufacturedCase {
    pub fn new(
        name: impl Into<String>,
        perm: PermField,
        pressure: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        velocity: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
        source: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            pressure: Arc::new(pressure),
            velocity: Arc::new(velocity),
            source: Arc::new(source),
            perm,
        }
    }

    pub fn p(&self, p: [f64; 2]) -> f64 {
        (self.pressure)(p[0], p[1])
    }

    pub fn u(&self, p: [f64; 2]) -> [f64; 2] {
        (self.velocity)(p[0], p[1])
    }

    pub fn f(&self, p: [f64; 2]) -> f64 {
        (self.source)(p[0], p[1])
    }

    /// Dirichlet data; the exact pressure restricted to the boundary.
    pub fn g(&self, p: [f64; 2]) -> f64 {
        self.p(p)
    }

    /// `p = sin(2 pi x) sin(2 pi y)` with `K = I`.
    pub fn test1() -> Self {
        let tp = 2.0 * PI;
        Self::new(
            "test1",
            PermField::identity(),
            move |x, y| (tp * x).sin() * (tp * y).sin(),
            move |x, y| [-tp * (tp * x).cos() * (tp * y).sin(), -tp * (tp * x).sin() * (tp * y).cos()],
            move |x, y| 2.0 * tp * tp * (tp * x).sin() * (tp * y).sin(),
        )
    }

    /// Same pressure as [`Self::test1`], with the oscillating scalar
    /// coefficient `k = 15 - 10 sin(3 pi x) sin(3 pi y)` on the diagonal.
    pub fn test2() -> Self {
        let tp = 2.0 * PI;
        let thp = 3.0 * PI;
        let k = move |x: f64, y: f64| 15.0 - 10.0 * (thp * x).sin() * (thp * y).sin();
        let px = move |x: f64, y: f64| tp * (tp * x).cos() * (tp * y).sin();
        let py = move |x: f64, y: f64| tp * (tp * x).sin() * (tp * y).cos();
        let kx = move |x: f64, y: f64| -10.0 * thp * (thp * x).cos() * (thp * y).sin();
        let ky = move |x: f64, y: f64| -10.0 * thp * (thp * x).sin() * (thp * y).cos();
        Self::new(
            "test2",
            PermField::new(5.0, 25.0, move |x, y| {
                let v = k(x, y);
                [v, v]
            }),
            move |x, y| (tp * x).sin() * (tp * y).sin(),
            move |x, y| [-k(x, y) * px(x, y), -k(x, y) * py(x, y)],
            // -div(k grad p) = -(kx px + ky py) - k lap p, lap p = -2 (2 pi)^2 p
            move |x, y| {
                let p = (tp * x).sin() * (tp * y).sin();
                -(kx(x, y) * px(x, y) + ky(x, y) * py(x, y)) + k(x, y) * 2.0 * tp * tp * p
            },
        )
    }

    /// `p = c`, no flow.
    pub fn constant(c: f64) -> Self {
        Self::new("constant", PermField::identity(), move |_, _| c, |_, _| [0.0, 0.0], |_, _| 0.0)
    }

    /// `p = a x + b y + c` with scalar coefficient `k`.
    pub fn linear(a: f64, b: f64, c: f64, k: f64) -> Self {
        Self::new(
            "linear",
            PermField::scalar(k),
            move |x, y| a * x + b * y + c,
            move |_, _| [-k * a, -k * b],
            |_, _| 0.0,
        )
    }

    /// Builtin case by name: `test1`, `test2`, `constant`, `linear-x`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "1" | "test1" => Ok(Self::test1()),
            "2" | "test2" => Ok(Self::test2()),
            "constant" => Ok(Self::constant(1.0)),
            "linear-x" => Ok(Self::linear(1.0, 0.0, 0.0, 1.0)),
            other => Err(Error::UnknownCase(other.to_string())),
        }
    }
}
