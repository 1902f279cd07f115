//! Method specification mini-grammar:
//! `ENGINE[:lambda-list][+prior|+prior-calibrated][+shared]`.
//!
//! Examples: `7pt:0,-0.6,-1.2+shared`, `9ptFlambda`, `7pt+prior`,
//! `8pt+prior-calibrated`. A `--methods` argument holds several specs
//! separated by `;` or by commas (a comma followed by a number extends the
//! current lambda list, a comma followed by a name starts a new spec).

use anyhow::{anyhow, bail, Result};
use radipose_core::robust::SolverEngine;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    None,
    Lambda,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub engine: SolverEngine,
    pub lambdas: Vec<f64>,
    pub prior: PriorMode,
    pub shared: bool,
}

pub const VALID_ENGINES: &str = "7pt, 8pt, 9ptFlambda";

fn engine_name(engine: SolverEngine) -> &'static str {
    match engine {
        SolverEngine::SevenPoint => "7pt",
        SolverEngine::EightPoint => "8pt",
        SolverEngine::NinePointLambda => "9ptFlambda",
    }
}

fn format_lambda(l: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{l}");
    s
}

impl MethodSpec {
    pub fn parse(input: &str) -> Result<Self> {
        let trimmed = input.trim();
        if trimmed.is_empty() {
            bail!("empty method spec");
        }
        let mut plus_parts = trimmed.split('+');
        let head = plus_parts.next().expect("split yields at least one part");
        let mut prior = PriorMode::None;
        let mut shared = false;
        for tag in plus_parts {
            match tag.trim() {
                "prior" => prior = PriorMode::Lambda,
                "prior-calibrated" => prior = PriorMode::Calibrated,
                "shared" => shared = true,
                other => bail!("unknown method tag '+{other}' in '{input}'"),
            }
        }

        let (engine_str, lambda_str) = match head.split_once(':') {
            Some((e, l)) => (e.trim(), Some(l)),
            None => (head.trim(), None),
        };
        let engine = match engine_str {
            "7pt" => SolverEngine::SevenPoint,
            "8pt" => SolverEngine::EightPoint,
            "9ptFlambda" => SolverEngine::NinePointLambda,
            other => bail!("unknown engine '{other}'; valid engines: {VALID_ENGINES}"),
        };

        let lambdas = match lambda_str {
            Some(list) => {
                if prior != PriorMode::None {
                    bail!("method '{input}' mixes a lambda list with a prior tag");
                }
                if engine == SolverEngine::NinePointLambda {
                    bail!("the 9ptFlambda engine estimates lambda itself; drop the list");
                }
                list.split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<f64>()
                            .map_err(|_| anyhow!("bad lambda '{tok}' in '{input}'"))
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
            None => vec![0.0],
        };
        if lambdas.is_empty() {
            bail!("empty lambda list in '{input}'");
        }

        if prior == PriorMode::Calibrated && engine != SolverEngine::EightPoint {
            bail!("prior-calibrated runs the 8pt engine; got '{}'", engine_str);
        }

        Ok(Self {
            engine,
            lambdas,
            prior,
            shared,
        })
    }

    /// Canonical string form; `parse(render(m)) == m`.
    pub fn render(&self) -> String {
        let mut out = engine_name(self.engine).to_string();
        match self.prior {
            PriorMode::None => {
                if self.engine != SolverEngine::NinePointLambda {
                    let list: Vec<String> = self.lambdas.iter().map(|l| format_lambda(*l)).collect();
                    out.push(':');
                    out.push_str(&list.join(","));
                }
            }
            PriorMode::Lambda => out.push_str("+prior"),
            PriorMode::Calibrated => out.push_str("+prior-calibrated"),
        }
        if self.shared {
            out.push_str("+shared");
        }
        out
    }

    /// The "Sample" report column: the lambda set for sampling methods,
    /// `prior` markers for injected ones, a cross for the dedicated solver.
    pub fn sample_label(&self) -> String {
        match self.prior {
            PriorMode::Lambda => "prior-lambda".to_string(),
            PriorMode::Calibrated => "prior-lambda-f".to_string(),
            PriorMode::None => {
                if self.engine == SolverEngine::NinePointLambda {
                    "x".to_string()
                } else {
                    let list: Vec<String> =
                        self.lambdas.iter().map(|l| format_lambda(*l)).collect();
                    format!("{{{}}}", list.join(","))
                }
            }
        }
    }
}

/// Splits a `--methods` argument into individual specs. `;` always
/// separates; a `,` separates only when the next token starts a new engine
/// name (otherwise it continues a lambda list).
pub fn split_method_list(input: &str) -> Vec<String> {
    let mut specs: Vec<String> = Vec::new();
    for semi in input.split(';') {
        for tok in semi.split(',') {
            let t = tok.trim();
            if t.is_empty() {
                continue;
            }
            let starts_new = t.chars().next().is_some_and(|c| c.is_ascii_digit())
                && (t.starts_with("7pt") || t.starts_with("8pt") || t.starts_with("9pt"));
            let continues_lambda = !starts_new
                && t.chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '.');
            if continues_lambda && !specs.is_empty() {
                let last = specs.last_mut().expect("nonempty");
                last.push(',');
                last.push_str(t);
            } else {
                specs.push(t.to_string());
            }
        }
    }
    specs
}

pub fn parse_method_list(input: &str) -> Result<Vec<MethodSpec>> {
    let parts = split_method_list(input);
    if parts.is_empty() {
        bail!("no methods given");
    }
    parts.iter().map(|p| MethodSpec::parse(p)).collect()
}
