use crate::error::{Error, Result};
use crate::sampler::GeneratedConfig;
use crate::schema::{ParamValue, ParameterSchema, RunRecord};

/// How one schema parameter maps onto feature columns.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedParam {
    Continuous { name: String, column: usize },
    OneHot { name: String, start: usize, alternatives: Vec<String> },
}

impl EncodedParam {
    pub fn name(&self) -> &str {
        match self {
            EncodedParam::Continuous { name, .. } | EncodedParam::OneHot { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            EncodedParam::Continuous { .. } => 1,
            EncodedParam::OneHot { alternatives, .. } => alternatives.len(),
        }
    }
}

/// Column layout: continuous parameters verbatim, discrete parameters
/// one-hot, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoding {
    params: Vec<EncodedParam>,
    n_cols: usize,
}

impl FeatureEncoding {
    pub fn from_params(params: Vec<EncodedParam>) -> Result<Self> {
        let mut next = 0;
        for p in &params {
            let start = match p {
                EncodedParam::Continuous { column, .. } => *column,
                EncodedParam::OneHot { start, alternatives, .. } => {
                    if alternatives.is_empty() {
                        return Err(Error::EncodingMismatch(format!("`{}` has no alternatives", p.name())));
                    }
                    *start
                }
            };
            if start != next {
                return Err(Error::EncodingMismatch(format!("`{}` is not contiguous", p.name())));
            }
            next += p.width();
        }
        Ok(Self { params, n_cols: next })
    }

    pub fn from_schema(schema: &ParameterSchema) -> Self {
        let mut params = Vec::with_capacity(schema.n_params());
        let mut col = 0;
        for c in schema.continuous() {
            params.push(EncodedParam::Continuous {
                name: c.name.clone(),
                column: col,
            });
            col += 1;
        }
        for d in schema.discrete() {
            params.push(EncodedParam::OneHot {
                name: d.name.clone(),
                start: col,
                alternatives: d.alternatives.clone(),
            });
            col += d.alternatives.len();
        }
        Self { params, n_cols: col }
    }

    /// Anonymous all-continuous layout named `x0, x1, ...`.
    pub fn plain(n_cols: usize) -> Self {
        let params = (0..n_cols)
            .map(|i| EncodedParam::Continuous {
                name: format!("x{i}"),
                column: i,
            })
            .collect();
        Self { params, n_cols }
    }

    pub fn params(&self) -> &[EncodedParam] {
        &self.params
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_cols);
        for p in &self.params {
            match p {
                EncodedParam::Continuous { name, .. } => out.push(name.clone()),
                EncodedParam::OneHot { name, alternatives, .. } => {
                    out.extend(alternatives.iter().map(|a| format!("{name}={a}")))
                }
            }
        }
        out
    }

    /// Errors unless `schema` encodes to exactly this layout.
    pub fn check_schema(&self, schema: &ParameterSchema) -> Result<()> {
        if *self != Self::from_schema(schema) {
            return Err(Error::EncodingMismatch(
                "forest was trained on a different parameter schema".into(),
            ));
        }
        Ok(())
    }

    pub fn encode_generated(&self, cfg: &GeneratedConfig, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_cols);
        let mut reals = cfg.reals.iter();
        let mut choices = cfg.choices.iter();
        for p in &self.params {
            match p {
                EncodedParam::Continuous { column, .. } => {
                    out[*column] = *reals.next().expect("config matches encoding")
                }
                EncodedParam::OneHot { start, alternatives, .. } => {
                    let slot = &mut out[*start..*start + alternatives.len()];
                    slot.fill(0.0);
                    slot[*choices.next().expect("config matches encoding") as usize] = 1.0;
                }
            }
        }
    }

    pub fn encode_record(&self, record: &RunRecord, out: &mut [f64]) -> Result<()> {
        if record.config.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: record.config.len(),
            });
        }
        for (p, value) in self.params.iter().zip(&record.config) {
            match (p, value) {
                (EncodedParam::Continuous { column, .. }, ParamValue::Real(v)) => out[*column] = *v,
                (EncodedParam::OneHot { name, start, alternatives }, ParamValue::Symbol(s)) => {
                    let pos = alternatives.iter().position(|a| a == s).ok_or_else(|| {
                        Error::UnknownAlternative {
                            param: name.clone(),
                            value: s.clone(),
                        }
                    })?;
                    let slot = &mut out[*start..*start + alternatives.len()];
                    slot.fill(0.0);
                    slot[pos] = 1.0;
                }
                (p, _) => {
                    return Err(Error::EncodingMismatch(format!("wrong value kind for `{}`", p.name())))
                }
            }
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    encoding: FeatureEncoding,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, encoding: FeatureEncoding) -> Result<Self> {
        let n_cols = encoding.n_cols();
        if n_cols == 0 || !data.len().is_multiple_of(n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature matrix contains non-finite values".into()));
        }
        Ok(Self {
            n_rows: data.len() / n_cols,
            data,
            encoding,
        })
    }

    /// Matrix with the anonymous layout of [`FeatureEncoding::plain`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                actual: bad.len(),
            });
        }
        Self::new(rows.concat(), FeatureEncoding::plain(n_cols))
    }

    pub fn from_records(records: &[&RunRecord], schema: &ParameterSchema) -> Result<Self> {
        let encoding = FeatureEncoding::from_schema(schema);
        let n_cols = encoding.n_cols();
        let mut data = vec![0.0; records.len() * n_cols];
        for (r, row) in records.iter().zip(data.chunks_exact_mut(n_cols)) {
            encoding.encode_record(r, row)?;
        }
        Self::new(data, encoding)
    }

    pub fn from_generated(configs: &[GeneratedConfig], schema: &ParameterSchema) -> Result<Self> {
        let encoding = FeatureEncoding::from_schema(schema);
        let n_cols = encoding.n_cols();
        let mut data = vec![0.0; configs.len() * n_cols];
        for (c, row) in configs.iter().zip(data.chunks_exact_mut(n_cols)) {
            encoding.encode_generated(c, row);
        }
        Self::new(data, encoding)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.encoding.n_cols()
    }

    pub fn encoding(&self) -> &FeatureEncoding {
        &self.encoding
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: rows.len(),
            encoding: self.encoding.clone(),
        }
    }

    /// Applies `f` to every value of one column.
    pub fn map_column(&mut self, col: usize, f: impl Fn(f64) -> f64) {
        let n = self.n_cols();
        for row in self.data.chunks_exact_mut(n) {
            row[col] = f(row[col]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ContinuousParamSpec, DiscreteParamSpec, Role};

    fn small_schema() -> ParameterSchema {
        let c = |n: &str| ContinuousParamSpec {
            name: n.into(),
            lower: 0.0,
            upper: 1.0,
        };
        let d = |n: &str, role, alts: &[&str]| DiscreteParamSpec {
            name: n.into(),
            role,
            alternatives: alts.iter().map(|s| s.to_string()).collect(),
        };
        ParameterSchema::new(
            vec![c("a"), c("b")],
            vec![
                d("flag", None, &["True", "False"]),
                d("policy", Some(Role::Policy), &["none", "p"]),
                d("region", Some(Role::Region), &["r"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_continuous_plus_boolean_is_four_columns() {
        let s = small_schema();
        let enc = FeatureEncoding::from_schema(&s);
        assert_eq!(enc.params()[..3].iter().map(EncodedParam::width).sum::<usize>(), 4);
        assert_eq!(enc.n_cols(), 7);
        assert_eq!(enc.column_names()[2..4], ["flag=True", "flag=False"]);
    }

    #[test]
    fn default_schema_widths() {
        let s = ParameterSchema::default_schema();
        let enc = FeatureEncoding::from_schema(&s);
        let width = |name: &str| enc.params().iter().find(|p| p.name() == name).unwrap().width();
        assert_eq!(width("Policies"), 4);
        assert_eq!(width("MR"), 46);
        assert_eq!(enc.n_cols(), 37 + 2 + 2 + 3 + 2 + 2 + 2 + 4 + 46);
    }

    #[test]
    fn records_encode_one_hot_groups() {
        let s = small_schema();
        let rec = RunRecord {
            id: 1,
            config: vec![
                ParamValue::Real(0.25),
                ParamValue::Real(0.5),
                ParamValue::Symbol("False".into()),
                ParamValue::Symbol("p".into()),
                ParamValue::Symbol("r".into()),
            ],
            indicators: vec![],
            valid: true,
        };
        let m = FeatureMatrix::from_records(&[&rec], &s).unwrap();
        assert_eq!(m.row(0), [0.25, 0.5, 0.0, 1.0, 0.0, 1.0, 1.0]);

        let mut bad = rec.clone();
        bad.config[2] = ParamValue::Symbol("Maybe".into());
        assert!(matches!(
            FeatureMatrix::from_records(&[&bad], &s),
            Err(Error::UnknownAlternative { .. })
        ));
    }
}
