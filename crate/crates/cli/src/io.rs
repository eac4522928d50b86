use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use relu_zono::{Dataset, Error, LossKind, Result};

/// Reads a dataset from `path`, or from stdin when the path is absent or `-`.
pub fn read_dataset(path: Option<&Path>) -> Result<Dataset> {
    let text = match path {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(p)?,
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    Dataset::from_json(&text)
}

/// Writes `text` to `path`, or to stdout when the path is absent or `-`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, text)?,
        _ => {
            let mut out = std::io::stdout().lock();
            let written = out.write_all(text.as_bytes()).and_then(|()| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") });
            // A reader that stops early (`| head`) is not an error.
            match written {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

/// Writes `text` as `name` inside `dir` and returns the written path.
pub fn write_artifact(dir: &Path, name: &str, text: &str) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let path: PathBuf = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path.display().to_string())
}

pub fn parse_loss(s: &str) -> std::result::Result<LossKind, String> {
    match s {
        "mse" => Ok(LossKind::Mse),
        "l1" => Ok(LossKind::L1),
        "logistic" => Ok(LossKind::Logistic),
        _ => Err(format!("unknown loss {s:?}, expected mse, l1 or logistic")),
    }
}

pub fn loss_name(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Mse => "mse",
        LossKind::L1 => "l1",
        LossKind::Logistic => "logistic",
    }
}

/// Output-weight choice: `pm-half` or an explicit comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputSpec {
    PmHalf,
    List(Vec<f64>),
}

impl OutputSpec {
    pub fn resolve(&self, m: Option<usize>) -> Result<Vec<f64>> {
        match (self, m) {
            (OutputSpec::PmHalf, Some(m)) => Ok(relu_zono::network::pm_half(m)),
            (OutputSpec::PmHalf, None) => Err(Error::InvalidArgument("--v pm-half needs --m".into())),
            (OutputSpec::List(v), Some(m)) if v.len() != m => {
                Err(Error::InvalidArgument(format!("--v has {} entries but --m is {m}", v.len())))
            }
            (OutputSpec::List(v), _) => Ok(v.clone()),
        }
    }
}

pub fn parse_output_spec(s: &str) -> std::result::Result<OutputSpec, String> {
    if s == "pm-half" {
        return Ok(OutputSpec::PmHalf);
    }
    parse_list(s).map(OutputSpec::List)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("cannot parse {t:?} in list {s:?}")))
        .collect()
}

/// Accuracy when every label is 0 or 1, `None` otherwise.
pub fn accuracy_if_binary(net: &relu_zono::ShallowReluNet, ds: &Dataset) -> Option<f64> {
    relu_zono::network::accuracy(net, ds).ok()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
