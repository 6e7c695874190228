//! Detector parameters and the flat `key = value` configuration format.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, PithError, Result};
use crate::imgproc::WORKING_WIDTH;
use crate::lo_sampler::LoSamplerParams;
use crate::pclines::PclinesParams;
use crate::pith_solver::SolverParams;
use crate::structure_tensor::StParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Method {
    #[serde(rename = "apd")]
    Apd,
    #[serde(rename = "apd-pcl")]
    ApdPcl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Apd => "apd",
            Method::ApdPcl => "apd-pcl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PithError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apd" => Ok(Method::Apd),
            "apd-pcl" | "apd_pcl" => Ok(Method::ApdPcl),
            other => invalid(format!("unknown method {other:?} (expected apd or apd-pcl)")),
        }
    }
}

/// Every tunable of both detectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorParams {
    pub target_width: usize,
    pub st: StParams,
    pub lo: LoSamplerParams,
    pub solver: SolverParams,
    pub pclines: PclinesParams,
}

/// Names accepted by [`DetectorParams::set`].
pub const PARAM_KEYS: &[&str] = &[
    "st_sigma",
    "st_w",
    "percent_lo",
    "lo_w",
    "r_f",
    "eps",
    "max_iter",
    "d",
    "ransac_outlier_th",
    "ransac_iters",
    "ransac_min_inliers",
    "seed",
    "target_width",
];

impl DetectorParams {
    /// Defaults for `method`; APD-PCL uses the wider 7×7 windows.
    pub fn for_method(method: Method) -> Self {
        let (st, lo) = match method {
            Method::Apd => (StParams::APD, LoSamplerParams::APD),
            Method::ApdPcl => (StParams::APD_PCL, LoSamplerParams::APD_PCL),
        };
        Self {
            target_width: WORKING_WIDTH,
            st,
            lo,
            solver: SolverParams::default(),
            pclines: PclinesParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_width < 2 {
            return invalid(format!("target_width must be >= 2, got {}", self.target_width));
        }
        self.st.validate()?;
        self.lo.validate()?;
        self.solver.validate()?;
        self.pclines.validate()
    }

    /// Sets one parameter from its textual value. `seed` drives both the
    /// solver jitter and RANSAC.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| PithError::InvalidInput(format!("{key}: cannot parse {value:?}")))
        }
        match key.trim() {
            "st_sigma" => self.st.st_sigma = num(key, value)?,
            "st_w" => self.st.st_w = num(key, value)?,
            "percent_lo" => self.lo.percent_lo = num(key, value)?,
            "lo_w" => self.lo.lo_w = num(key, value)?,
            "r_f" => self.solver.r_f = num(key, value)?,
            "eps" => self.solver.eps = num(key, value)?,
            "max_iter" => self.solver.max_iter = num(key, value)?,
            "d" => self.pclines.d = num(key, value)?,
            "ransac_outlier_th" => self.pclines.ransac_outlier_th = num(key, value)?,
            "ransac_iters" => self.pclines.ransac_iters = num(key, value)?,
            "ransac_min_inliers" => self.pclines.ransac_min_inliers = num(key, value)?,
            "seed" => {
                let s: u64 = num(key, value)?;
                self.solver.seed = s;
                self.pclines.seed = s;
            }
            "target_width" => self.target_width = num(key, value)?,
            other => return invalid(format!("unknown parameter {other:?}")),
        }
        Ok(())
    }

    /// Applies every pair of a key-value text, then validates.
    pub fn apply_kv(&mut self, text: &str, origin: &str) -> Result<()> {
        for (line, key, value) in parse_kv(text, origin)? {
            self.set(&key, &value).map_err(|e| PithError::Config {
                path: origin.to_string(),
                line,
                message: e.to_string(),
            })?;
        }
        self.validate()
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Returns `(line number, key, value)` in file order.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(PithError::Config {
                path: origin.to_string(),
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_defaults() {
        let apd = DetectorParams::for_method(Method::Apd);
        assert_eq!((apd.st.st_w, apd.lo.lo_w), (3, 3));
        assert_eq!(apd.st.st_sigma, 1.2);
        assert_eq!(apd.lo.percent_lo, 0.7);
        assert_eq!(apd.solver.r_f, 7.0);
        assert_eq!(apd.solver.eps, 1e-5);
        assert_eq!(apd.solver.max_iter, 5);
        assert_eq!(apd.pclines.ransac_outlier_th, 0.03);
        assert_eq!(apd.target_width, 640);
        let pcl = DetectorParams::for_method(Method::ApdPcl);
        assert_eq!((pcl.st.st_w, pcl.lo.lo_w), (7, 7));
    }

    #[test]
    fn method_parse() {
        assert_eq!("apd".parse::<Method>().unwrap(), Method::Apd);
        assert_eq!("APD-PCL".parse::<Method>().unwrap(), Method::ApdPcl);
        assert!("lfsa".parse::<Method>().is_err());
    }

    #[test]
    fn kv_overrides_and_validation() {
        let mut p = DetectorParams::for_method(Method::Apd);
        p.apply_kv("# tuned\nst_w = 7\npercent_lo=0.5  # comment\n\nseed = 9\n", "test").unwrap();
        assert_eq!(p.st.st_w, 7);
        assert_eq!(p.lo.percent_lo, 0.5);
        assert_eq!((p.solver.seed, p.pclines.seed), (9, 9));

        let mut p = DetectorParams::for_method(Method::Apd);
        assert!(p.apply_kv("st_w = 4", "test").is_err());
        let err = p.apply_kv("bogus = 1", "cfg.txt").unwrap_err();
        assert!(err.to_string().contains("cfg.txt:1"), "{err}");
        assert!(matches!(p.apply_kv("no equals sign", "x"), Err(PithError::Config { line: 1, .. })));
    }
}
