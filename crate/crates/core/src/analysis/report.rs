use std::fs;
use std::path::{Path, PathBuf};

use super::{
    bernoulli_std_pct, diff_to_baseline, mean_std_bands, rank_policies_per_mr, standardized_param_score,
    welch_by_param, Aggregate, Band, BaselineDeltaTable, Counts, GroupShareTable, ParamScoreTable, PolicyRanking,
    WelchResult, ALL,
};
use crate::error::{Error, Result};
use crate::schema::ParameterSchema;

/// Files written by [`emit_report`], in writing order.
pub const REPORT_FILES: [&str; 11] = [
    "table_mean_acp.csv",
    "table_son_acps.csv",
    "table_son_dummies.csv",
    "table_std_acp.csv",
    "table_params.csv",
    "table_welch.csv",
    "table_best_policy.csv",
    "policy_tally.csv",
    "fig_sorted_policies.csv",
    "fig_mean_std.csv",
    "fig_parameters.csv",
];

/// Size, optimal and non-optimal percentages of one group, for the
/// surrogate and, when available, the simulation corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub label: String,
    pub surrogate: Counts,
    pub surrogate_total: u64,
    pub reference: Option<(Counts, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub shares: GroupShareTable,
    pub deltas: BaselineDeltaTable,
    pub bands: Vec<Band>,
    pub ranking: PolicyRanking,
    pub params: ParamScoreTable,
    pub welch: Vec<(String, Option<WelchResult>)>,
    pub regions: Vec<SizeRow>,
    pub choices: Vec<SizeRow>,
}

impl Report {
    /// `reference` holds the labeled simulation runs, if any.
    pub fn build(schema: &ParameterSchema, surrogate: &Aggregate, reference: Option<&Aggregate>) -> Result<Self> {
        let shares = GroupShareTable::from_aggregate(schema, surrogate)?;
        let deltas = diff_to_baseline(&shares)?;
        let ranking = rank_policies_per_mr(&deltas);
        let params = standardized_param_score(schema, surrogate, reference)?;
        let s_total = surrogate.total().n;
        let r_total = reference.map(|r| r.total().n);
        let size_rows = |d: usize, label: &dyn Fn(&str) -> String| -> Vec<SizeRow> {
            schema.discrete()[d]
                .alternatives
                .iter()
                .enumerate()
                .map(|(a, alt)| SizeRow {
                    label: label(alt),
                    surrogate: surrogate.choice_counts(d)[a],
                    surrogate_total: s_total,
                    reference: reference.zip(r_total).map(|(r, t)| (r.choice_counts(d)[a], t)),
                })
                .collect()
        };
        let regions = size_rows(schema.region_index(), &|alt| alt.to_string());
        let mut choices = Vec::new();
        for (d, spec) in schema.discrete().iter().enumerate() {
            if d != schema.region_index() {
                choices.extend(size_rows(d, &|alt| format!("{}: {alt}", spec.name)));
            }
        }
        Ok(Self {
            bands: mean_std_bands(&shares),
            welch: welch_by_param(schema, surrogate),
            shares,
            deltas,
            ranking,
            params,
            regions,
            choices,
        })
    }

    /// Regions by descending baseline share (ties by name), the pooled row
    /// in its sorted place.
    fn delta_order(&self) -> Vec<&super::DeltaRow> {
        let mut rows: Vec<&super::DeltaRow> = self.deltas.rows.iter().chain([&self.deltas.all]).collect();
        rows.sort_by(|a, b| b.baseline.total_cmp(&a.baseline).then_with(|| a.region.cmp(&b.region)));
        rows
    }
}

fn pct(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn ratio_pct(num: u64, den: u64) -> String {
    if den == 0 {
        String::new()
    } else {
        pct(num as f64 * 100.0 / den as f64)
    }
}

fn score(x: f64) -> String {
    format!("{x:.3}")
}

fn write_table(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut w = csv::Writer::from_path(&tmp)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn size_table(rows: &[SizeRow], first: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let header = strings([
        first,
        "size_surrogate",
        "size_abm",
        "optimal_surrogate",
        "optimal_abm",
        "non_optimal_surrogate",
        "non_optimal_abm",
    ]);
    let body = rows
        .iter()
        .map(|r| {
            let s = r.surrogate;
            let (rc, rt) = r.reference.unwrap_or_default();
            let has_ref = r.reference.is_some();
            let opt = |c: Counts| ratio_pct(c.optimal, c.n);
            let non = |c: Counts| ratio_pct(c.n - c.optimal, c.n);
            vec![
                r.label.clone(),
                ratio_pct(s.n, r.surrogate_total),
                if has_ref { ratio_pct(rc.n, rt) } else { String::new() },
                opt(s),
                if has_ref { opt(rc) } else { String::new() },
                non(s),
                if has_ref { non(rc) } else { String::new() },
            ]
        })
        .collect();
    (header, body)
}

/// Writes every table and plot-data file into `dir`, returning their paths.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = &report.deltas;
    let order = report.delta_order();
    let mut written = Vec::new();

    let mut header = vec!["region".to_string(), d.baseline.clone()];
    header.extend(d.policies.iter().cloned());
    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|r| {
            let mut row = vec![r.region.clone(), pct(r.baseline)];
            row.extend(r.deltas.iter().map(|&x| pct(x)));
            row
        })
        .collect();
    written.push(write_table(dir, REPORT_FILES[0], &header, &rows)?);

    let (h, rows) = size_table(&report.regions, "region");
    written.push(write_table(dir, REPORT_FILES[1], &h, &rows)?);
    let (h, rows) = size_table(&report.choices, "choice");
    written.push(write_table(dir, REPORT_FILES[2], &h, &rows)?);

    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|r| {
            let sb = bernoulli_std_pct(r.baseline / 100.0);
            let mut row = vec![r.region.clone(), pct(sb)];
            row.extend(r.deltas.iter().map(|&x| pct(bernoulli_std_pct((r.baseline + x) / 100.0) - sb)));
            row
        })
        .collect();
    written.push(write_table(dir, REPORT_FILES[3], &header, &rows)?);

    let rows: Vec<Vec<String>> = report
        .params
        .rows
        .iter()
        .map(|p| vec![p.name.clone(), p.abm_optimal.map(score).unwrap_or_default(), score(p.surrogate_optimal)])
        .collect();
    written.push(write_table(dir, REPORT_FILES[4], &strings(["parameter", "abm_optimal", "surrogate_optimal"]), &rows)?);

    let rows: Vec<Vec<String>> = report
        .welch
        .iter()
        .map(|(name, w)| match w {
            Some(w) => vec![name.clone(), format!("{:.4}", w.t), format!("{:.1}", w.df), format!("{:.3e}", w.p)],
            None => vec![name.clone(), String::new(), String::new(), String::new()],
        })
        .collect();
    written.push(write_table(dir, REPORT_FILES[5], &strings(["parameter", "t", "df", "p"]), &rows)?);

    let rank = &report.ranking;
    let rows: Vec<Vec<String>> = rank
        .regions
        .iter()
        .map(|r| {
            let status = match (r.gain, r.best.len()) {
                (false, _) => "no gain",
                (true, 1) => "best",
                (true, _) => "tie",
            };
            let best: Vec<&str> = r.best.iter().map(|&i| d.policies[i].as_str()).collect();
            vec![r.region.clone(), best.join("|"), status.to_string()]
        })
        .collect();
    written.push(write_table(dir, REPORT_FILES[6], &strings(["region", "best", "status"]), &rows)?);

    let mut rows: Vec<Vec<String>> = d
        .policies
        .iter()
        .zip(&rank.tally)
        .map(|(p, n)| vec![p.clone(), n.to_string()])
        .collect();
    rows.push(vec!["tie".into(), rank.ties.to_string()]);
    rows.push(vec!["no gain".into(), rank.no_gain.to_string()]);
    written.push(write_table(dir, REPORT_FILES[7], &strings(["outcome", "regions"]), &rows)?);

    let s = &report.shares;
    let mut rows = Vec::new();
    for r in &order {
        let counts = |p: usize| match s.regions.iter().position(|x| *x == r.region) {
            Some(i) => s.counts(i, p),
            None => s.pooled(p),
        };
        for (p, policy) in s.policies.iter().enumerate() {
            let c = counts(p);
            rows.push(vec![r.region.clone(), policy.clone(), c.n.to_string(), ratio_pct(c.optimal, c.n)]);
        }
    }
    written.push(write_table(dir, REPORT_FILES[8], &strings(["region", "policy", "n", "optimal_pct"]), &rows)?);

    let rows: Vec<Vec<String>> = report
        .bands
        .iter()
        .map(|b| vec![b.region.clone(), b.policy.clone(), pct(b.mean), pct(b.std), pct(b.lower), pct(b.upper)])
        .collect();
    written.push(write_table(
        dir,
        REPORT_FILES[9],
        &strings(["region", "policy", "mean", "std", "lower", "upper"]),
        &rows,
    )?);

    let rows: Vec<Vec<String>> = report
        .params
        .rows
        .iter()
        .map(|p| vec![p.name.clone(), score(p.surrogate_optimal), score(p.surrogate_all)])
        .collect();
    written.push(write_table(dir, REPORT_FILES[10], &strings(["parameter", "optimal", "all"]), &rows)?);

    debug_assert!(order.iter().any(|r| r.region == ALL));
    Ok(written)
}
