//! Smooth compactly supported test functions in log-mass, plus the
//! `bump:<center>;<width>` CLI spec.

use std::str::FromStr;

use crate::error::Error;

/// f(x) = exp(1 - 1/(1 - s^2)) with s = log(x/center)/width on |s| < 1,
/// zero outside: infinitely smooth, supported on
/// [center e^{-width}, center e^{width}], peak value 1 at the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn new(center: f64, width: f64) -> Bump {
        assert!(center > 0.0 && width > 0.0);
        Bump { center, width }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let s = (x / self.center).ln() / self.width;
        if s * s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (
            self.center * (-self.width).exp(),
            self.center * self.width.exp(),
        )
    }
}

impl FromStr for Bump {
    type Err = Error;

    fn from_str(s: &str) -> Result<Bump, Error> {
        let body = s
            .strip_prefix("bump:")
            .ok_or_else(|| Error::InvalidConfig(format!("expected bump:<center>;<width>, got {s:?}")))?;
        let (c, w) = body
            .split_once(';')
            .ok_or_else(|| Error::InvalidConfig(format!("expected bump:<center>;<width>, got {s:?}")))?;
        let center: f64 = c
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad bump center {c:?}")))?;
        let width: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad bump width {w:?}")))?;
        if !(center > 0.0 && width > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bump center and width must be positive: {s:?}"
            )));
        }
        Ok(Bump { center, width })
    }
}
