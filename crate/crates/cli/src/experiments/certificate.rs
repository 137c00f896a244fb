use mckeanflow_core::certificates::{CertificateReport, Verdict};
use mckeanflow_core::model::Model;

use super::{Context, Outcome};
use crate::config::{Certificate, ExperimentConfig};
use crate::error::CliError;

pub fn certificate(ctx: &mut Context, cfg: &ExperimentConfig<Certificate>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let mut report = CertificateReport::compute(model, p.epsilon)?;
    ctx.progress(format!("eta={:.6} eta_bar={:.6} q1={:.6}", report.eta, report.eta_bar, report.q1));
    if p.validate {
        report.validate(model, &p.validation)?;
        for c in &report.checks {
            ctx.progress(format!("{}: passed={} worst_ratio={:.4} samples={}", c.name, c.passed, c.worst_ratio, c.samples));
        }
    }
    ctx.out.write_json("certificate.json", &report)?;
    Ok(match report.verdict {
        Verdict::Invalid => Outcome::CertificateInvalid,
        _ => Outcome::Success,
    })
}
