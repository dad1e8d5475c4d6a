//! Browser bindings. Every export takes plain values and returns a JSON
//! string, so the page needs no generated TypeScript types.
//!
//! There is no wall clock on wasm32, so solves are bounded by node count.

use rmlearn::armdp::{extract_rm, named_rm};
use rmlearn::env::{random_traces, EnvSpec, GridMap, Variant};
use rmlearn::rl::{armdpq_learning, RunConfig};
use rmlearn::solver::{solve_deepening, Budget, SolveOutcome};
use rmlearn::trace_file::{parse_traces, write_traces};
use rmlearn::Granularity;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn env_of(env: &str, variant: &str) -> Result<(EnvSpec, Variant), String> {
    let spec = env.parse::<EnvSpec>().map_err(|e| e.to_string())?;
    let variant = variant.parse::<Variant>().map_err(|e| e.to_string())?;
    Ok((spec, variant))
}

fn node_budget(nodes: f64) -> Budget {
    Budget { time: None, nodes: (nodes > 0.0).then_some(nodes as u64) }
}

fn reply(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|error| json!({ "error": error })).to_string()
}

fn machine(text: &str) -> Value {
    serde_json::from_str(text).expect("machine JSON is well formed")
}

/// Random-policy traces for a bundled task, in the JSONL trace format.
#[wasm_bindgen]
pub fn simulate(env: &str, variant: &str, episodes: u32, seed: u32) -> String {
    reply(env_of(env, variant).map(|(spec, variant)| {
        let nmrdp = spec.build(variant, None);
        let traces = random_traces(&nmrdp, episodes as u64, seed as u64, Granularity::State);
        json!({
            "traces": write_traces(&traces),
            "episodes": traces.len(),
            "steps": traces.total_steps(),
            "conflicting_keys": traces.conflicts().len(),
        })
    }))
}

/// Smallest machine consistent with a JSONL trace corpus.
#[wasm_bindgen]
pub fn infer(traces: &str, max_k: u32, budget_nodes: f64) -> String {
    reply(infer_json(traces, max_k, budget_nodes))
}

fn infer_json(text: &str, max_k: u32, budget_nodes: f64) -> Result<Value, String> {
    let traces = parse_traces(text).map_err(|e| e.to_string())?;
    let run = solve_deepening(&traces, 1, max_k.max(1), true, traces.granularity(), node_budget(budget_nodes))
        .map_err(|e| e.to_string())?;
    let attempts: Vec<Value> =
        run.attempts.iter().map(|(k, r)| json!({ "k": k, "status": r.outcome.status(), "nodes": r.nodes })).collect();
    let mut out = json!({ "attempts": attempts, "nodes": run.nodes() });
    match &run.last().outcome {
        SolveOutcome::Feasible(solution) => {
            let rm = extract_rm(solution, &traces);
            out["status"] = json!("feasible");
            out["states"] = json!(rm.num_states());
            out["z"] = json!(solution.z);
            let named = named_rm(&rm, &traces);
            out["dot"] = json!(named.to_dot());
            out["machine"] = machine(&named.to_json());
        }
        other => out["status"] = json!(other.status()),
    }
    Ok(out)
}

/// One learner run; returns the reward curve and the final machine.
#[wasm_bindgen]
pub fn learn(env: &str, variant: &str, episodes: u32, seed: u32, budget_nodes: f64) -> String {
    reply(env_of(env, variant).and_then(|(spec, variant)| {
        let nmrdp = spec.build(variant, None);
        let mut config = RunConfig::for_env(spec);
        config.seed = seed as u64;
        config.episodes = episodes as u64;
        config.exploit_after = config.exploit_after.min(config.episodes * 9 / 10);
        config.solve_budget = node_budget(budget_nodes);
        config.validate()?;
        let result = armdpq_learning(&nmrdp, &config);
        let traces = result.traces.clone().with_names(nmrdp.map().state_names(), GridMap::action_names());
        let named = named_rm(&result.final_rm, &traces);
        let curve: Vec<f64> = result.metrics.iter().map(|m| m.window_avg_reward).collect();
        Ok(json!({
            "status": result.status.to_string(),
            "states": result.final_rm.num_states(),
            "final_k": result.final_k,
            "size_t_o": result.traces.len(),
            "solve_nodes": result.solve_nodes(),
            "first_conflict": result.first_conflict(),
            "curve": curve,
            "dot": named.to_dot(),
            "machine": machine(&named.to_json()),
        }))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: String) -> Value {
        serde_json::from_str(&text).unwrap()
    }

    #[test]
    fn simulate_then_infer() {
        let sim = parse(simulate("corridor", "full", 8, 3));
        let inferred = parse(infer(sim["traces"].as_str().unwrap(), 5, 0.0));
        assert_eq!(inferred["status"], "feasible");
        assert_eq!(inferred["states"], 2);
        assert!(inferred["machine"]["rules"].as_array().is_some_and(|r| !r.is_empty()));
        assert!(inferred["dot"].as_str().unwrap().starts_with("digraph"));
    }

    #[test]
    fn errors_come_back_as_json() {
        assert!(parse(simulate("nowhere", "full", 1, 0))["error"].is_string());
        assert!(parse(infer("nonsense", 3, 0.0))["error"].is_string());
    }

    #[test]
    fn learn_reports_a_curve() {
        let out = parse(learn("corridor", "full", 200, 0, 0.0));
        assert_eq!(out["status"], "completed");
        assert_eq!(out["curve"].as_array().unwrap().len(), 200);
    }
}
