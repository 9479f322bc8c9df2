//! Final tables. Collects every answer cell produced by `awaken`,
//! `unseen-qa`, and `baseline` (whichever ran), aggregates per arm, and
//! writes `report.md` plus `report.csv`. Reports carry no timestamps, so
//! reruns under the same fingerprint are byte-identical.

use anyhow::Context;
use awaken_core::eval::{aggregate, render_report_csv, render_report_md, AwakenResult};

use super::StageCtx;
use crate::errors::CliError;
use crate::records::{artifact_path, write_atomic};

pub fn report(ctx: &StageCtx) -> Result<(), CliError> {
    let mut results: Vec<AwakenResult> = Vec::new();
    let mut sources = Vec::new();

    for (stage, field) in [
        ("awaken", None),
        ("unseen-qa", Some("result")),
        ("baseline", Some("result")),
    ] {
        let path = artifact_path(ctx.dir, stage);
        if !path.is_file() {
            continue;
        }
        let records = crate::records::require_stage(ctx.dir, stage, ctx.fingerprint, ctx.force)?;
        for rec in &records {
            if rec.question_id == "*" {
                continue;
            }
            let value = match field {
                None => rec.payload.clone(),
                Some(f) => rec
                    .payload
                    .get(f)
                    .cloned()
                    .unwrap_or(serde_json::Value::Null),
            };
            let result: AwakenResult = serde_json::from_value(value)
                .with_context(|| format!("decoding {stage} record for {}", rec.question_id))
                .map_err(CliError::Other)?;
            results.push(result);
        }
        sources.push(stage);
        let _ = records;
    }

    if sources.is_empty() {
        return Err(CliError::Prerequisite(
            "no answer cells found; run `awaken-kgqa awaken`, `unseen-qa`, or `baseline` first"
                .to_string(),
        ));
    }

    let rows = aggregate(&results, ctx.cfg.report.mode);
    let md = render_report_md(&rows, ctx.cfg.report.mode);
    let csv = render_report_csv(&rows);
    write_atomic(&ctx.dir.join("report.md"), md.as_bytes()).map_err(CliError::Other)?;
    write_atomic(&ctx.dir.join("report.csv"), csv.as_bytes()).map_err(CliError::Other)?;
    log::info!(
        "aggregated {} cells from {} into {}",
        results.len(),
        sources.join(", "),
        ctx.dir.join("report.md").display()
    );
    print!("{md}");
    Ok(())
}
