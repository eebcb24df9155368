//! TOML model definitions.
//!
//! ```toml
//! name = "whitham"
//!
//! [symbol]
//! kind = "whitham"          # whitham | kdv | table | expression
//! k_star = 1.0
//! k_max = 200.0
//! # table = "symbol.txt"    # two columns k, m(k); path relative to this file
//! # expr = "sqrt(tanh(k)/k)"
//! # monotone_tail = true
//!
//! [nonlinearity]
//! kind = "quadratic"        # quadratic | quadratic_cubic | expression
//! delta_star = 1e6
//! # expr = "u^2 + u^3"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelError, Multiplier, Nonlinearity, SymbolModel, TabulatedSymbol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub symbol: SymbolConfig,
    pub nonlinearity: NonlinearityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    pub kind: String,
    #[serde(default)]
    pub k_star: Option<f64>,
    #[serde(default)]
    pub k_max: Option<f64>,
    #[serde(default)]
    pub monotone_tail: Option<bool>,
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub expr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: String,
    #[serde(default)]
    pub delta_star: Option<f64>,
    #[serde(default)]
    pub expr: Option<String>,
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>, ModelError> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(ModelError::Config(format!(
            "{name} must be a positive finite number, got {x}"
        ))),
        other => Ok(other),
    }
}

/// Reads a two-column `k m(k)` table; `#` starts a comment, commas or
/// whitespace separate columns.
pub fn parse_symbol_table(text: &str) -> Result<TabulatedSymbol, ModelError> {
    let mut ks = Vec::new();
    let mut ms = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            return Err(ModelError::Table(format!(
                "line {}: expected 2 columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| ModelError::Table(format!("line {}: {s:?}: {e}", lineno + 1)))
        };
        ks.push(parse(cols[0])?);
        ms.push(parse(cols[1])?);
    }
    TabulatedSymbol::new(&ks, &ms)
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    /// Builds the model; relative table paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<SymbolModel, ModelError> {
        let s = &self.symbol;
        let name = self.name.clone().unwrap_or_else(|| s.kind.clone());
        let mut multiplier = match s.kind.as_str() {
            "whitham" => Multiplier::whitham(),
            "kdv" => Multiplier::kdv(),
            "table" => {
                let rel = s.table.as_ref().ok_or_else(|| {
                    ModelError::Config("symbol.kind = \"table\" requires symbol.table".into())
                })?;
                let path = match base_dir {
                    Some(dir) if rel.is_relative() => dir.join(rel),
                    _ => rel.clone(),
                };
                let text = fs::read_to_string(&path).map_err(|source| ModelError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Multiplier::tabulated(name.clone(), parse_symbol_table(&text)?)
            }
            "expression" => {
                let src = s.expr.as_deref().ok_or_else(|| {
                    ModelError::Config("symbol.kind = \"expression\" requires symbol.expr".into())
                })?;
                Multiplier::expression(name.clone(), src)?
            }
            other => {
                return Err(ModelError::Config(format!(
                    "unknown symbol.kind {other:?} (expected whitham, kdv, table or expression)"
                )))
            }
        };
        if let Some(k) = positive("symbol.k_star", s.k_star)? {
            multiplier.k_star = k;
        }
        if let Some(k) = positive("symbol.k_max", s.k_max)? {
            multiplier.k_max = k;
        }
        if multiplier.k_max <= multiplier.k_star {
            return Err(ModelError::Config(format!(
                "symbol.k_max ({}) must exceed symbol.k_star ({})",
                multiplier.k_max, multiplier.k_star
            )));
        }
        multiplier.monotone_tail = s.monotone_tail.unwrap_or(false);

        let n = &self.nonlinearity;
        let mut nonlinearity = match n.kind.as_str() {
            "quadratic" => Nonlinearity::quadratic(),
            "quadratic_cubic" => Nonlinearity::quadratic_cubic(),
            "expression" => {
                let src = n.expr.as_deref().ok_or_else(|| {
                    ModelError::Config(
                        "nonlinearity.kind = \"expression\" requires nonlinearity.expr".into(),
                    )
                })?;
                Nonlinearity::expression("expression", src)?
            }
            other => {
                return Err(ModelError::Config(format!(
                    "unknown nonlinearity.kind {other:?} (expected quadratic, quadratic_cubic or expression)"
                )))
            }
        };
        if let Some(d) = positive("nonlinearity.delta_star", n.delta_star)? {
            nonlinearity.delta_star = d;
        }
        Ok(SymbolModel::new(multiplier, nonlinearity))
    }
}

/// Reads and builds a model file.
pub fn load_model(path: &Path) -> Result<(SymbolModel, ModelConfig), ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = ModelConfig::from_toml_str(&text)?;
    let model = config.build(path.parent())?;
    Ok((model, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_whitham_config() {
        let cfg = ModelConfig::from_toml_str(
            r#"
            name = "w"
            [symbol]
            kind = "whitham"
            k_star = 0.8
            [nonlinearity]
            kind = "quadratic"
            "#,
        )
        .unwrap();
        let model = cfg.build(None).unwrap();
        assert_eq!(model.multiplier.k_star, 0.8);
        assert_eq!(model.multiplier.k_max, 200.0);
        assert!((model.gamma().unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_kind_and_keys() {
        let bad = "[symbol]\nkind = \"cosine\"\n[nonlinearity]\nkind = \"quadratic\"\n";
        let cfg = ModelConfig::from_toml_str(bad).unwrap();
        assert!(matches!(cfg.build(None), Err(ModelError::Config(_))));
        let extra = "[symbol]\nkind = \"kdv\"\nfoo = 1\n[nonlinearity]\nkind = \"quadratic\"\n";
        assert!(ModelConfig::from_toml_str(extra).is_err());
    }

    #[test]
    fn table_file_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = String::from("# k m\n");
        for i in 0..=200 {
            let k = i as f64 * 0.1;
            table.push_str(&format!("{k} {}\n", crate::model::whitham_symbol(k)));
        }
        fs::write(dir.path().join("m.txt"), table).unwrap();
        let cfg_path = dir.path().join("model.toml");
        fs::write(
            &cfg_path,
            "[symbol]\nkind = \"table\"\ntable = \"m.txt\"\n[nonlinearity]\nkind = \"quadratic\"\n",
        )
        .unwrap();
        let (model, _) = load_model(&cfg_path).unwrap();
        assert!(model.multiplier.is_tabulated());
        assert!((model.multiplier.eval(1.05) - crate::model::whitham_symbol(1.05)).abs() < 1e-5);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_model(Path::new("/no/such/model.toml")).unwrap_err();
        assert!(err.to_string().contains("/no/such/model.toml"));
    }
}
