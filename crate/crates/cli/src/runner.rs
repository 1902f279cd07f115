//! Glue between parsed method specs, prior records and the core robust
//! estimation loop.

use anyhow::{bail, Result};
use radipose_core::bench::{aggregate, evaluate_pairs, AggregateReport, BenchPair};
use radipose_core::robust::{
    ransac_estimate, EstimationStrategy, PriorInjection, RansacConfig, RefineBlocks,
    SamplingStrategy, SolverEngine,
};

use crate::method::{MethodSpec, PriorMode};
use crate::schema::PriorRecord;

/// Human-readable refinement-blocks label for report rows, e.g.
/// `R,t,f1,f2,l1,l2` or `R,t,f,l` in shared mode.
pub fn refinement_label(blocks: &RefineBlocks, shared: bool) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if blocks.rotation {
        parts.push("R");
    }
    if blocks.translation {
        parts.push("t");
    }
    if shared {
        if blocks.focal1 {
            parts.push("f");
        }
        if blocks.lambda1 {
            parts.push("l");
        }
    } else {
        if blocks.focal1 {
            parts.push("f1");
        }
        if blocks.focal2 {
            parts.push("f2");
        }
        if blocks.lambda1 {
            parts.push("l1");
        }
        if blocks.lambda2 {
            parts.push("l2");
        }
    }
    parts.join(",")
}

/// Parses a refinement-blocks flag such as `R,t,f1,l1,l2` or `R,t,f,l`.
pub fn parse_refine_blocks(input: &str) -> Result<RefineBlocks> {
    let mut blocks = RefineBlocks {
        rotation: false,
        translation: false,
        focal1: false,
        focal2: false,
        lambda1: false,
        lambda2: false,
    };
    for tok in input.split(',') {
        match tok.trim() {
            "R" | "rot" => blocks.rotation = true,
            "t" | "trans" => blocks.translation = true,
            "f" => {
                blocks.focal1 = true;
                blocks.focal2 = true;
            }
            "f1" => blocks.focal1 = true,
            "f2" => blocks.focal2 = true,
            "l" | "lambda" => {
                blocks.lambda1 = true;
                blocks.lambda2 = true;
            }
            "l1" => blocks.lambda1 = true,
            "l2" => blocks.lambda2 = true,
            "" => {}
            other => bail!("unknown refinement block '{other}'"),
        }
    }
    Ok(blocks)
}

/// Builds the estimation strategy for a method, given the per-image priors
/// when the method needs them.
pub fn strategy_for_method(
    method: &MethodSpec,
    priors: Option<(&PriorRecord, &PriorRecord)>,
) -> Result<EstimationStrategy> {
    match method.prior {
        PriorMode::None => Ok(EstimationStrategy::Sampling(SamplingStrategy {
            u1: method.lambdas.clone(),
            u2: method.lambdas.clone(),
            shared: method.shared,
        })),
        PriorMode::Lambda | PriorMode::Calibrated => {
            let Some((p1, p2)) = priors else {
                bail!("method '{}' needs a priors file", method.render());
            };
            let injection = PriorInjection {
                lambda1: p1.lambda,
                lambda2: p2.lambda,
                focal1: p1.focal,
                focal2: p2.focal,
                gravity1: p1.gravity,
                gravity2: p2.gravity,
            };
            if method.prior == PriorMode::Calibrated
                && (injection.focal1.is_none() || injection.focal2.is_none())
            {
                bail!(
                    "method '{}' needs focal priors for both images ('{}', '{}')",
                    method.render(),
                    p1.image_id,
                    p2.image_id
                );
            }
            Ok(EstimationStrategy::Priors {
                priors: injection,
                shared: method.shared,
                calibrated: method.prior == PriorMode::Calibrated,
            })
        }
    }
}

/// Runs one method over all pairs (per-pair seed `cfg.seed ^ index`) and
/// aggregates. `strategies` must be index-aligned with `pairs`.
pub fn run_method_over_pairs(
    engine: SolverEngine,
    strategies: &[EstimationStrategy],
    pairs: &[BenchPair],
    cfg: &RansacConfig,
    shared_metric: bool,
    jobs: usize,
) -> Result<AggregateReport> {
    assert_eq!(strategies.len(), pairs.len());
    let evals = evaluate_pairs(pairs, shared_metric, jobs, |pair, i| {
        let mut cfg_i = cfg.clone();
        cfg_i.seed = cfg.seed ^ (i as u64);
        ransac_estimate(
            &pair.corrs,
            pair.dims1,
            pair.dims2,
            engine,
            &strategies[i],
            &cfg_i,
        )
        .ok()
    });
    Ok(aggregate(&evals)?)
}
