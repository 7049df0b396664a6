//! Results tables.

use gridhedge_core::stats::BootstrapCi;
use gridhedge_core::CaseResult;

use crate::error::Failure;

/// Case column value: the filter label with `_` separators, or `all`.
pub fn case_name(result: &CaseResult) -> String {
    result
        .case_filter
        .as_ref()
        .map_or_else(|| "all".to_string(), |l| l.to_string().replace(',', "_"))
}

/// `t_hours,metric,case,mean,ci_lo,ci_hi`, one row per time and metric.
/// Standard deviations have no interval and leave the CI columns empty.
pub fn results_csv(result: &CaseResult) -> Result<Vec<u8>, Failure> {
    let case = case_name(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["t_hours", "metric", "case", "mean", "ci_lo", "ci_hi"]).map_err(io)?;
    for s in &result.steps {
        let t = s.t.to_string();
        let mut row = |metric: &str, ci: &BootstrapCi| {
            w.write_record([
                t.as_str(),
                metric,
                &case,
                &ci.mean.to_string(),
                &ci.lo.to_string(),
                &ci.hi.to_string(),
            ])
        };
        row("b_tes", &s.b_tes).map_err(io)?;
        row("b_ces", &s.b_ces).map_err(io)?;
        row("v_tes", &s.v_tes).map_err(io)?;
        row("v_ces", &s.v_ces).map_err(io)?;
        row("savings_pct", &s.savings_pct).map_err(io)?;
        for (i, ci) in s.pg_mean.iter().enumerate() {
            row(&format!("pg_mean_{}", i + 1), ci).map_err(io)?;
        }
        for (i, sd) in s.pg_std.iter().enumerate() {
            w.write_record([t.as_str(), &format!("pg_std_{}", i + 1), &case, &sd.to_string(), "", ""])
                .map_err(io)?;
        }
    }
    w.into_inner().map_err(|e| Failure::Input(e.to_string()))
}

/// `case,count` over every simulated candidate path.
pub fn case_counts_csv(result: &CaseResult) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["case", "count"]).map_err(io)?;
    for (label, n) in &result.case_counts {
        w.write_record([label.to_string().replace(',', "_"), n.to_string()]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Input(e.to_string()))
}

/// Human-readable per-step table.
pub fn summary(result: &CaseResult) -> String {
    let mut s = format!(
        "case {}: {} paths matched of {} simulated\n{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        case_name(result),
        result.n_matched,
        result.n_attempted,
        "t_h",
        "b_tes",
        "b_ces",
        "v_tes",
        "v_ces",
        "savings%"
    );
    for st in &result.steps {
        s.push_str(&format!(
            "{:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.2}\n",
            st.t, st.b_tes.mean, st.b_ces.mean, st.v_tes.mean, st.v_ces.mean, st.savings_pct.mean
        ));
    }
    s.push_str(&format!("overall savings: {:.2}%\n", result.overall_savings_pct));
    s
}
