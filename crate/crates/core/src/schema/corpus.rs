//! Delimiter-separated run corpora and generated-configuration tables.
//!
//! Run corpus: `,` delimiter, header row, one run per row; columns are the
//! schema parameters followed by the indicators. An optional `run_id`
//! column is treated as metadata. Generated tables start with a
//! `config_id` column, then the schema parameters, and prediction tables
//! append `predicted` and `vote_fraction`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::{validate_record, ParamValue, ParameterSchema, RunRecord, Violation};
use crate::error::{Error, Result};
use crate::forest::Prediction;
use crate::sampler::GeneratedConfig;

pub const RUN_ID: &str = "run_id";
pub const CONFIG_ID: &str = "config_id";
pub const PREDICTED: &str = "predicted";
pub const VOTE_FRACTION: &str = "vote_fraction";

#[derive(Debug, Clone, PartialEq)]
pub struct RunCorpus {
    pub indicator_names: Vec<String>,
    pub records: Vec<RunRecord>,
    /// Violations of every record flagged invalid, keyed by record id.
    pub violations: Vec<(u64, Vec<Violation>)>,
}

impl RunCorpus {
    pub fn n_valid(&self) -> usize {
        self.records.iter().filter(|r| r.valid).count()
    }

    pub fn n_invalid(&self) -> usize {
        self.records.len() - self.n_valid()
    }

    pub fn valid_records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.valid)
    }

    pub fn indicator_position(&self, name: &str) -> Option<usize> {
        self.indicator_names.iter().position(|n| n == name)
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::BadNumber {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

pub fn ingest_path(path: &Path, schema: &ParameterSchema) -> Result<RunCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_runs(BufReader::new(file), schema)
}

/// Parses a run corpus. Rows that break schema bounds or alternatives are
/// kept and flagged invalid.
pub fn ingest_runs<R: Read>(reader: R, schema: &ParameterSchema) -> Result<RunCorpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut param_cols = Vec::with_capacity(schema.n_params());
    for name in schema.names() {
        param_cols.push(find(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?);
    }
    let run_id_col = find(RUN_ID);
    let schema_names: Vec<&str> = schema.names().collect();
    let indicator_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| Some(i) != run_id_col && !schema_names.contains(&&headers[i]))
        .collect();
    let indicator_names = indicator_cols.iter().map(|&i| headers[i].to_string()).collect();

    let n_cont = schema.continuous().len();
    let mut records = Vec::new();
    let mut violations = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let id = match run_id_col {
            Some(c) => rec[c]
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::BadNumber {
                    row,
                    column: RUN_ID.into(),
                    value: rec[c].to_string(),
                })?,
            None => row as u64,
        };
        let mut config = Vec::with_capacity(param_cols.len());
        for (k, &col) in param_cols.iter().enumerate() {
            if k < n_cont {
                config.push(ParamValue::Real(parse_number(&rec[col], row, &headers[col])?));
            } else {
                config.push(ParamValue::Symbol(rec[col].to_string()));
            }
        }
        let indicators = indicator_cols
            .iter()
            .map(|&c| parse_number(&rec[c], row, &headers[c]))
            .collect::<Result<Vec<_>>>()?;
        let mut record = RunRecord {
            id,
            config,
            indicators,
            valid: true,
        };
        let v = validate_record(&record, schema);
        if !v.is_empty() {
            record.valid = false;
            violations.push((id, v));
        }
        records.push(record);
    }
    Ok(RunCorpus {
        indicator_names,
        records,
        violations,
    })
}

/// Writes runs in the ingestion format (no `run_id` column).
pub fn write_runs<'a, W: Write>(
    writer: W,
    schema: &ParameterSchema,
    indicator_names: &[String],
    records: impl IntoIterator<Item = &'a RunRecord>,
) -> Result<()> {
    write_runs_impl(writer, schema, indicator_names, records, false)
}

/// Like [`write_runs`], with a leading `run_id` column so ids survive a
/// round trip.
pub fn write_runs_with_ids<'a, W: Write>(
    writer: W,
    schema: &ParameterSchema,
    indicator_names: &[String],
    records: impl IntoIterator<Item = &'a RunRecord>,
) -> Result<()> {
    write_runs_impl(writer, schema, indicator_names, records, true)
}

fn write_runs_impl<'a, W: Write>(
    writer: W,
    schema: &ParameterSchema,
    indicator_names: &[String],
    records: impl IntoIterator<Item = &'a RunRecord>,
    with_ids: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let id_header = with_ids.then_some(RUN_ID);
    w.write_record(
        id_header
            .into_iter()
            .chain(schema.names())
            .chain(indicator_names.iter().map(String::as_str)),
    )?;
    let mut row = Vec::new();
    for r in records {
        row.clear();
        if with_ids {
            row.push(r.id.to_string());
        }
        row.extend(r.config.iter().map(ParamValue::to_string));
        row.extend(r.indicators.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<runs>", e))?;
    Ok(())
}

fn config_cells(schema: &ParameterSchema, cfg: &GeneratedConfig, row: &mut Vec<String>) {
    row.push(cfg.id.to_string());
    row.extend(cfg.reals.iter().map(f64::to_string));
    row.extend(
        cfg.choices
            .iter()
            .zip(schema.discrete())
            .map(|(&c, d)| d.alternatives[c as usize].clone()),
    );
}

/// Streams generated configurations, optionally with their predictions.
pub struct GeneratedWriter<W: Write> {
    inner: csv::Writer<W>,
    row: Vec<String>,
    with_predictions: bool,
}

impl<W: Write> GeneratedWriter<W> {
    pub fn new(writer: W, schema: &ParameterSchema, with_predictions: bool) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = vec![CONFIG_ID];
        header.extend(schema.names());
        if with_predictions {
            header.extend([PREDICTED, VOTE_FRACTION]);
        }
        inner.write_record(&header)?;
        Ok(Self {
            inner,
            row: Vec::new(),
            with_predictions,
        })
    }

    pub fn write(
        &mut self,
        schema: &ParameterSchema,
        cfg: &GeneratedConfig,
        prediction: Option<&Prediction>,
    ) -> Result<()> {
        self.row.clear();
        config_cells(schema, cfg, &mut self.row);
        match (self.with_predictions, prediction) {
            (true, Some(p)) => {
                self.row.push(p.class.to_string());
                self.row.push(p.vote_fraction.to_string());
            }
            (false, None) => {}
            _ => return Err(Error::InvalidArgument("prediction column mismatch".into())),
        }
        self.inner.write_record(&self.row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<generated>", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<generated>", e.into_error()))
    }
}

pub fn write_generated<'a, W: Write>(
    writer: W,
    schema: &ParameterSchema,
    configs: impl IntoIterator<Item = &'a GeneratedConfig>,
) -> Result<W> {
    let mut w = GeneratedWriter::new(writer, schema, false)?;
    for c in configs {
        w.write(schema, c, None)?;
    }
    w.finish()
}

/// Row-by-row reader for generated tables and prediction tables.
pub struct GeneratedReader<'s, R: Read> {
    schema: &'s ParameterSchema,
    records: csv::StringRecordsIntoIter<R>,
    id_col: usize,
    param_cols: Vec<usize>,
    prediction_cols: Option<(usize, usize)>,
    row: usize,
}

impl<'s, R: Read> GeneratedReader<'s, R> {
    pub fn new(reader: R, schema: &'s ParameterSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let id_col = find(CONFIG_ID)?;
        let param_cols = schema.names().map(find).collect::<Result<Vec<_>>>()?;
        let prediction_cols = match (find(PREDICTED), find(VOTE_FRACTION)) {
            (Ok(p), Ok(v)) => Some((p, v)),
            _ => None,
        };
        Ok(Self {
            schema,
            records: rdr.into_records(),
            id_col,
            param_cols,
            prediction_cols,
            row: 0,
        })
    }

    pub fn has_predictions(&self) -> bool {
        self.prediction_cols.is_some()
    }

    fn parse(&self, rec: &csv::StringRecord) -> Result<(GeneratedConfig, Option<Prediction>)> {
        let row = self.row;
        let id = rec[self.id_col].parse::<u64>().map_err(|_| Error::BadNumber {
            row,
            column: CONFIG_ID.into(),
            value: rec[self.id_col].to_string(),
        })?;
        let n_cont = self.schema.continuous().len();
        let mut reals = Vec::with_capacity(n_cont);
        for (spec, &col) in self.schema.continuous().iter().zip(&self.param_cols) {
            reals.push(parse_number(&rec[col], row, &spec.name)?);
        }
        let mut choices = Vec::with_capacity(self.schema.discrete().len());
        for (spec, &col) in self.schema.discrete().iter().zip(&self.param_cols[n_cont..]) {
            let pos = spec.position(&rec[col]).ok_or_else(|| Error::UnknownAlternative {
                param: spec.name.clone(),
                value: rec[col].to_string(),
            })?;
            choices.push(pos as u16);
        }
        let prediction = match self.prediction_cols {
            Some((p, v)) => {
                let class = match &rec[p] {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::BadNumber {
                            row,
                            column: PREDICTED.into(),
                            value: other.to_string(),
                        })
                    }
                };
                Some(Prediction {
                    class,
                    vote_fraction: parse_number(&rec[v], row, VOTE_FRACTION)?,
                })
            }
            None => None,
        };
        Ok((GeneratedConfig { id, reals, choices }, prediction))
    }
}

impl<R: Read> Iterator for GeneratedReader<'_, R> {
    type Item = Result<(GeneratedConfig, Option<Prediction>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(e.into())),
        };
        let out = self.parse(&rec);
        self.row += 1;
        Some(out)
    }
}

pub fn read_generated<R: Read>(reader: R, schema: &ParameterSchema) -> Result<Vec<GeneratedConfig>> {
    GeneratedReader::new(reader, schema)?
        .map(|r| r.map(|(c, _)| c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ParameterSchema {
        ParameterSchema::default_schema()
    }

    fn sample_rows(schema: &ParameterSchema, n: usize) -> String {
        let mut out = String::new();
        let header: Vec<&str> = schema.names().chain(["gdp_index", "gini_index"]).collect();
        out.push_str(&header.iter().map(|h| format!("\"{h}\"")).collect::<Vec<_>>().join(","));
        out.push('\n');
        for i in 0..n {
            let mut cells: Vec<String> = schema
                .continuous()
                .iter()
                .map(|c| (c.lower + c.width() * (i as f64 + 0.5) / n as f64).to_string())
                .collect();
            cells.extend(schema.discrete().iter().map(|d| format!("\"{}\"", d.alternatives[i % d.alternatives.len()])));
            cells.push(format!("{}", i as f64 * 0.1));
            cells.push(format!("{}", 1.0 - i as f64 * 0.01));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    #[test]
    fn ingest_well_formed() {
        let s = schema();
        let corpus = ingest_runs(sample_rows(&s, 10).as_bytes(), &s).unwrap();
        assert_eq!(corpus.records.len(), 10);
        assert_eq!(corpus.n_valid(), 10);
        assert_eq!(corpus.indicator_names, ["gdp_index", "gini_index"]);
        assert_eq!(corpus.records[3].id, 3);

        let mut buf = Vec::new();
        write_runs(&mut buf, &s, &corpus.indicator_names, &corpus.records).unwrap();
        let again = ingest_runs(buf.as_slice(), &s).unwrap();
        assert_eq!(again, corpus);
    }

    #[test]
    fn out_of_bounds_row_is_flagged_not_dropped() {
        let s = schema();
        let mut corpus = ingest_runs(sample_rows(&s, 3).as_bytes(), &s).unwrap();
        let markup = s.continuous_position("Markup").unwrap();
        corpus.records[1].config[markup] = ParamValue::Real(0.7);
        let mut buf = Vec::new();
        write_runs(&mut buf, &s, &corpus.indicator_names, &corpus.records).unwrap();
        let again = ingest_runs(buf.as_slice(), &s).unwrap();
        assert_eq!(again.records.len(), 3);
        assert_eq!(again.n_invalid(), 1);
        assert!(!again.records[1].valid);
        assert_eq!(again.violations[0].0, 1);
        assert_eq!(again.violations[0].1[0].to_string(), "out-of-bounds: Markup > 0.5");
    }

    #[test]
    fn missing_policy_column_is_an_error() {
        let s = schema();
        let text = sample_rows(&s, 2).replacen("\"Policies\"", "\"Policy\"", 1);
        assert!(matches!(ingest_runs(text.as_bytes(), &s), Err(Error::MissingColumn(c)) if c == "Policies"));
    }

    #[test]
    fn unparseable_number_is_an_error() {
        let s = schema();
        let text = sample_rows(&s, 2);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replacen(|c: char| c.is_ascii_digit(), "x", 1);
        let bad = lines.join("\n");
        assert!(matches!(ingest_runs(bad.as_bytes(), &s), Err(Error::BadNumber { row: 1, .. })));
    }
}
