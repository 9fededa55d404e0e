use serde::{Deserialize, Serialize};

/// One trigonometric term `amp * sin(2π freq x + phase)` or the cosine analogue.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrigTerm {
    pub kind: TrigKind,
    pub amp: f64,
    pub freq: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    Sin,
    Cos,
}

/// Closed-form scalar function: a polynomial plus trigonometric terms.
///
/// Map branches and roof pieces are supplied in this form so that values and
/// derivatives are exact; inverse branches of nonlinear pieces are obtained by
/// bisection + Newton on the formula.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Formula {
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub trig: Vec<TrigTerm>,
}

const TAU: f64 = std::f64::consts::TAU;

impl Formula {
    pub fn constant(c: f64) -> Formula {
        Formula { poly: vec![c], trig: Vec::new() }
    }

    pub fn affine(intercept: f64, slope: f64) -> Formula {
        Formula { poly: vec![intercept, slope], trig: Vec::new() }
    }

    /// `amp * cos(2π freq x)`
    pub fn cos(amp: f64, freq: f64) -> Formula {
        Formula {
            poly: Vec::new(),
            trig: vec![TrigTerm { kind: TrigKind::Cos, amp, freq, phase: 0.0 }],
        }
    }

    /// `amp * sin(2π freq x)`
    pub fn sin(amp: f64, freq: f64) -> Formula {
        Formula {
            poly: Vec::new(),
            trig: vec![TrigTerm { kind: TrigKind::Sin, amp, freq, phase: 0.0 }],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for &c in self.poly.iter().rev() {
            v = v * x + c;
        }
        for t in &self.trig {
            let arg = TAU * t.freq * x + t.phase;
            v += match t.kind {
                TrigKind::Sin => t.amp * arg.sin(),
                TrigKind::Cos => t.amp * arg.cos(),
            };
        }
        v
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (k, &c) in self.poly.iter().enumerate().skip(1) {
            v += c * k as f64 * x.powi(k as i32 - 1);
        }
        for t in &self.trig {
            let arg = TAU * t.freq * x + t.phase;
            let w = TAU * t.freq * t.amp;
            v += match t.kind {
                TrigKind::Sin => w * arg.cos(),
                TrigKind::Cos => -w * arg.sin(),
            };
        }
        v
    }

    /// `Some((intercept, slope))` when the formula is affine.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        if !self.trig.is_empty() || self.poly.len() > 2 {
            return None;
        }
        let intercept = self.poly.first().copied().unwrap_or(0.0);
        let slope = self.poly.get(1).copied().unwrap_or(0.0);
        Some((intercept, slope))
    }
}
