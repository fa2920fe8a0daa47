//! Single-item performance report: worst-case profit, best-case profit and regret per policy.

use std::io::{Read, Write};

use drro_core::conic::SolverOptions;
use drro_core::{
    regret_newsvendor, solve_dro, solve_drro_newsvendor, worst_case_expectation, CompositeLoss, DrroError,
    Result,
};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::scenario::{generate_samples, newsvendor_instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub theta: f64,
    /// `−sup_P E_P[ℓ(θ,X)]`.
    pub worst_case: f64,
    /// `sup_P E_P[−ℓ(θ,X)]`.
    pub best_case: f64,
    pub regret: f64,
    pub gap_worst: f64,
    pub gap_best: f64,
    pub gap_regret: f64,
}

pub fn performance_table(config: &ScenarioConfig, delta: f64, tol: f64) -> Result<Vec<TableRow>> {
    let data = generate_samples(config)?;
    let inst = newsvendor_instance(config, &data)?;
    let ball = config.ball_for(delta)?;
    let loss = inst.loss();
    let support = inst.support();
    let dro = solve_dro(&loss, &data, &ball, &drro_core::Polyhedron::nonneg(1), &support)?.theta[0];
    let drro = solve_drro_newsvendor(&inst, &ball, tol)?.0;
    let opts = SolverOptions::tight();
    let mut rows = Vec::new();
    for (method, theta) in [("ERM", inst.erm()), ("DRO", dro), ("DRRO", drro)] {
        let worst = worst_case_expectation(&CompositeLoss::from_loss(&loss, &[theta]), &data, &ball, &support, &opts)?;
        let best =
            worst_case_expectation(&CompositeLoss::negated_loss(&loss, &[theta]), &data, &ball, &support, &opts)?;
        rows.push(TableRow {
            method: method.into(),
            theta,
            worst_case: -worst.value,
            best_case: best.value,
            regret: regret_newsvendor(theta, &inst, &ball)?.value,
            gap_worst: 0.0,
            gap_best: 0.0,
            gap_regret: 0.0,
        });
    }
    let top_worst = rows.iter().map(|r| r.worst_case).fold(f64::NEG_INFINITY, f64::max);
    let top_best = rows.iter().map(|r| r.best_case).fold(f64::NEG_INFINITY, f64::max);
    let low_regret = rows.iter().map(|r| r.regret).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.gap_worst = top_worst - r.worst_case;
        r.gap_best = top_best - r.best_case;
        r.gap_regret = r.regret - low_regret;
    }
    Ok(rows)
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| DrroError::InvalidArgument(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| DrroError::InvalidArgument(format!("csv: {e}")))
}

pub fn read_table_csv<R: Read>(input: R) -> Result<Vec<TableRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| DrroError::InvalidArgument(format!("csv: {e}")))
}
