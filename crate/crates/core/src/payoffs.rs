//! Exotic payoffs on two-asset price paths.
//!
//! Solvers never see a [`PayoffSpec`] directly: it is tabulated once on the
//! full product grid, and the resulting [`PayoffTable`] supplies the LP
//! objective coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MultiIndex, ProductGrid};

pub const PAYOFF_SCHEMA: &str = "mcmot-payoff-v1";

/// Values on every point of a product grid, row-major in the
/// `x_1..x_N, y_1..y_N` axis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl PayoffTable {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::shape(format!(
                "payoff table of shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("payoff table holds non-finite value {v}")));
        }
        Ok(Self { shape, values })
    }

    pub fn constant(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            values: vec![value; len],
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "schema": PAYOFF_SCHEMA,
            "shape": self.shape,
            "values": self.values,
        }))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            schema: String,
            shape: Vec<usize>,
            values: Vec<f64>,
        }
        let file: File = serde_json::from_str(text)?;
        if file.schema != PAYOFF_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("expected {PAYOFF_SCHEMA:?}, found {:?}", file.schema),
            ));
        }
        Self::new(file.shape, file.values).map_err(|e| Error::schema("values", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `max{(x_1 + x_2 + y_1 + y_2)/4 - strike, 0}`.
    BasketAsianCall { strike: f64 },
    /// `max{(x_2 - x_1)^2, (y_2 - y_1)^2}`.
    MaxSquaredIncrement,
    /// Arbitrary values looked up by grid multi-index.
    Table(PayoffTable),
}

/// A point of the product grid: prices of both assets along the path, plus
/// the multi-index the prices were read from (needed by table payoffs).
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub index: Option<Vec<usize>>,
}

impl GridPath {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, index: None }
    }
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PayoffSpec::BasketAsianCall { strike } if !(strike.is_finite() && *strike >= 0.0) => {
                Err(Error::invalid(format!("basket Asian strike {strike} must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, path: &GridPath) -> Result<f64> {
        match self {
            PayoffSpec::BasketAsianCall { strike } => {
                two_period(path)?;
                let avg = (path.x[0] + path.x[1] + path.y[0] + path.y[1]) / 4.0;
                Ok((avg - strike).max(0.0))
            }
            PayoffSpec::MaxSquaredIncrement => {
                two_period(path)?;
                let dx = path.x[1] - path.x[0];
                let dy = path.y[1] - path.y[0];
                Ok((dx * dx).max(dy * dy))
            }
            PayoffSpec::Table(table) => {
                let idx = path
                    .index
                    .as_ref()
                    .ok_or_else(|| Error::invalid("table payoff needs a grid multi-index"))?;
                if idx.len() != table.shape.len() || idx.iter().zip(&table.shape).any(|(i, n)| i >= n)
                {
                    return Err(Error::OutOfRange(format!(
                        "index {idx:?} not in payoff table of shape {:?}",
                        table.shape
                    )));
                }
                Ok(table.values[crate::grid::ravel(idx, &table.shape)])
            }
        }
    }

    /// Values on every point of `grid`, aligned with coupling indexing.
    pub fn tabulate(&self, grid: &ProductGrid) -> Result<PayoffTable> {
        self.validate()?;
        let shape = grid.shape();
        if let PayoffSpec::Table(table) = self {
            if table.shape != shape {
                return Err(Error::shape(format!(
                    "payoff table shape {:?} does not match grid {shape:?}",
                    table.shape
                )));
            }
            return Ok(table.clone());
        }
        let mut values = Vec::with_capacity(grid.len());
        for idx in MultiIndex::new(&shape) {
            let (x, y) = grid.path_values(&idx);
            let v = self.evaluate(&GridPath {
                x,
                y,
                index: Some(idx.clone()),
            })?;
            if !v.is_finite() {
                return Err(Error::Numerical(format!("payoff is {v} at grid point {idx:?}")));
            }
            values.push(v);
        }
        PayoffTable::new(shape, values)
    }
}

fn two_period(path: &GridPath) -> Result<()> {
    if path.x.len() != 2 || path.y.len() != 2 {
        return Err(Error::shape(format!(
            "built-in payoffs need two maturities per asset, got {} and {}",
            path.x.len(),
            path.y.len()
        )));
    }
    Ok(())
}
