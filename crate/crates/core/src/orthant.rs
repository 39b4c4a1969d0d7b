//! Gaussian tails and bivariate normal orthant probabilities.
//!
//! The bivariate integral follows Drezner and Wesolowsky as refined by Genz:
//! Gauss-Legendre quadrature over the correlation for |r| ≤ 0.925 and an
//! asymptotic expansion plus quadrature close to ±1.

#![allow(clippy::excessive_precision)]

use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};

const TWO_PI: f64 = 2.0 * PI;

/// (weight, abscissa) pairs for the negative half of symmetric Gauss-Legendre rules.
const GL6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];

const GL12: [(f64, f64); 6] = [
    (0.4717533638651177e-01, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];

const GL20: [(f64, f64); 10] = [
    (0.1761400713915212e-01, -0.9931285991850949),
    (0.4060142980038694e-01, -0.9639719272779138),
    (0.6267204833410906e-01, -0.9122344282513259),
    (0.8327674157670475e-01, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.7652652113349733e-01),
];

fn rule(r_abs: f64) -> &'static [(f64, f64)] {
    if r_abs < 0.3 {
        &GL6
    } else if r_abs < 0.75 {
        &GL12
    } else {
        &GL20
    }
}

/// Standard normal upper tail Q(x).
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Correlation-specific part of the bivariate computation, reusable across
/// many (h, k) pairs with the same correlation.
#[derive(Clone, Debug)]
pub struct OrthantKernel {
    r: f64,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Independent,
    /// `scale * sum w exp((sn hk - hs) inv)`, one entry per node.
    Moderate {
        scale: f64,
        nodes: Vec<(f64, f64, f64)>,
    },
    Strong,
}

impl OrthantKernel {
    pub fn new(r: f64) -> Self {
        let r = r.clamp(-1.0, 1.0);
        if r == 0.0 {
            return Self {
                r,
                kind: Kind::Independent,
            };
        }
        if r.abs() > 0.925 {
            return Self { r, kind: Kind::Strong };
        }
        let asr = r.asin();
        let mut nodes = Vec::with_capacity(20);
        for &(w, x) in rule(r.abs()) {
            for s in [-1.0, 1.0] {
                let sn = (asr * (s * x + 1.0) / 2.0).sin();
                nodes.push((w, sn, 1.0 / (1.0 - sn * sn)));
            }
        }
        Self {
            r,
            kind: Kind::Moderate {
                scale: asr / (2.0 * TWO_PI),
                nodes,
            },
        }
    }

    pub fn correlation(&self) -> f64 {
        self.r
    }

    /// `P(X > h, Y > k) - Q(h) Q(k)`, computed without forming the product
    /// when the correlation is moderate.
    pub fn excess(&self, h: f64, k: f64) -> f64 {
        match &self.kind {
            Kind::Independent => 0.0,
            Kind::Moderate { scale, nodes } => {
                let hk = h * k;
                let hs = 0.5 * (h * h + k * k);
                let mut acc = 0.0;
                for &(w, sn, inv) in nodes {
                    acc += w * ((sn * hk - hs) * inv).exp();
                }
                acc * scale
            }
            Kind::Strong => strong_upper(h, k, self.r) - gaussian_tail(h) * gaussian_tail(k),
        }
    }

    /// `P(X > h, Y > k)` for standardized X, Y with this correlation.
    pub fn upper(&self, h: f64, k: f64) -> f64 {
        match self.kind {
            Kind::Strong => strong_upper(h, k, self.r),
            _ => (gaussian_tail(h) * gaussian_tail(k) + self.excess(h, k)).clamp(0.0, 1.0),
        }
    }
}

fn strong_upper(h: f64, k: f64, r: f64) -> f64 {
    let (k, hk) = if r < 0.0 { (-k, -h * k) } else { (k, h * k) };
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let a2 = (1.0 - r) * (1.0 + r);
        let mut a = a2.sqrt();
        let b2 = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let e = -0.5 * (b2 / a2 + hk);
        if e > -100.0 {
            bvn = a * e.exp() * (1.0 - c * (b2 - a2) * (1.0 - d * b2 / 5.0) / 3.0 + c * d * a2 * a2 / 5.0);
        }
        if -hk < 100.0 {
            let b = b2.sqrt();
            bvn -= (-0.5 * hk).exp()
                * TWO_PI.sqrt()
                * gaussian_tail(b / a)
                * b
                * (1.0 - c * b2 * (1.0 - d * b2 / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in &GL20 {
            for s in [-1.0, 1.0] {
                let xs = (a * (s * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let e = -0.5 * (b2 / xs + hk);
                if e > -100.0 {
                    bvn += a
                        * w
                        * e.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn += gaussian_tail(h.max(k));
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += gaussian_tail(-k) - gaussian_tail(-h);
            } else {
                bvn += gaussian_tail(h) - gaussian_tail(k);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    OrthantKernel::new(r).upper(h, k)
}

/// `P(z1 > 0, z2 > 0)` for a bivariate normal with the given moments.
pub fn orthant_prob(mu1: f64, mu2: f64, var1: f64, var2: f64, cov: f64) -> Result<f64> {
    if var1.is_nan() || var2.is_nan() || var1 <= 0.0 || var2 <= 0.0 {
        return Err(invalid("variance", format!("({var1}, {var2}) must be positive")));
    }
    let s = (var1 * var2).sqrt();
    if cov.abs() > s * (1.0 + 1e-12) {
        return Err(invalid("covariance", format!("{cov} exceeds sqrt(var1 var2) = {s}")));
    }
    let r = (cov / s).clamp(-1.0, 1.0);
    Ok(bvn_upper(-mu1 / var1.sqrt(), -mu2 / var2.sqrt(), r))
}
