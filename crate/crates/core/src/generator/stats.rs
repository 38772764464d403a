// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use num_bigint::BigUint;

use super::partitions::stirling2;
use super::{ArrangeMode, GenError, GeneratorConfig, LeaderPool};

/// Closed-form sizes of the three pipeline stages. Nothing is materialized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DryRunStats {
    pub instances: usize,
    pub step1: BigUint,
    pub step2: BigUint,
    pub step3_static: BigUint,
    pub step3_without_replacement: BigUint,
    pub step3_with_replacement: BigUint,
    /// Step 3 for the configured mode, after filters.
    pub step3_selected: BigUint,
}

pub fn falling_factorial(n: &BigUint, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    let mut cur = n.clone();
    for _ in 0..k {
        if cur == BigUint::from(0u32) {
            return BigUint::from(0u32);
        }
        acc *= &cur;
        cur -= 1u32;
    }
    acc
}

pub fn dry_run_stats(cfg: &GeneratorConfig) -> Result<DryRunStats, GenError> {
    cfg.check()?;
    let instances = cfg.num_nodes + cfg.num_twins;
    let step1 = stirling2(instances, cfg.partitions);
    let leaders = match cfg.leader_pool {
        LeaderPool::Targets => cfg.num_twins,
        LeaderPool::AllAuthors => cfg.num_nodes,
    };
    let mut step2 = &step1 * BigUint::from(leaders as u64);
    if let Some(x) = cfg.filter_step2.limit() {
        step2 = step2.min(BigUint::from(x as u64));
    }
    let r = cfg.rounds as u64;
    let step3_static = step2.clone();
    let step3_without_replacement = falling_factorial(&step2, r);
    let step3_with_replacement = step2.pow(r as u32);
    let mut selected = match cfg.mode {
        ArrangeMode::Static => step3_static.clone(),
        ArrangeMode::PermuteWithoutReplacement => step3_without_replacement.clone(),
        ArrangeMode::PermuteWithReplacement => step3_with_replacement.clone(),
        ArrangeMode::RandomPerRound { sample_size } => BigUint::from(sample_size as u64),
    };
    if let Some(x) = cfg.filter_step3.limit() {
        selected = selected.min(BigUint::from(x as u64));
    }
    Ok(DryRunStats {
        instances,
        step1,
        step2,
        step3_static,
        step3_without_replacement,
        step3_with_replacement,
        step3_selected: selected,
    })
}

/// `1.7e8`-style rendering; exact below one million.
pub fn approx(n: &BigUint) -> String {
    let digits = n.to_string();
    if digits.len() <= 6 {
        return group(&digits);
    }
    let exp = digits.len() - 1;
    let lead: f64 = digits[..3].parse::<f64>().unwrap_or(0.0) / 100.0;
    format!("{lead:.1}e{exp}")
}

fn group(digits: &str) -> String {
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl DryRunStats {
    /// Exact counts as decimal strings, keyed by stage.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "instances": self.instances,
            "step1": self.step1.to_string(),
            "step2": self.step2.to_string(),
            "step3_static": self.step3_static.to_string(),
            "step3_without_replacement": self.step3_without_replacement.to_string(),
            "step3_with_replacement": self.step3_with_replacement.to_string(),
            "step3_selected": self.step3_selected.to_string(),
        })
    }

    pub fn render(&self, cfg: &GeneratorConfig) -> String {
        format!(
            "nodes {} twins {} partitions {} rounds {} ({} instances)\n\
             step 1 partition scenarios      {}\n\
             step 2 leader-partition pairs   {}\n\
             step 3 static                   {}\n\
             step 3 without replacement      {}\n\
             step 3 with replacement         {}\n\
             selected ({})                   {}\n",
            cfg.num_nodes,
            cfg.num_twins,
            cfg.partitions,
            cfg.rounds,
            self.instances,
            group(&self.step1.to_string()),
            group(&self.step2.to_string()),
            approx(&self.step3_static),
            approx(&self.step3_without_replacement),
            approx(&self.step3_with_replacement),
            cfg.mode.name(),
            approx(&self.step3_selected),
        )
    }
}
