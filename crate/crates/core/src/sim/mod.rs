//! Simulated parameter-server runtime.
//!
//! Workers are plain values; "communication" is byte accounting. Every worker
//! draws from its own stream keyed by (seed, machine, round) and the server
//! reduces in machine order, so results never depend on thread count or
//! scheduling.

mod log;
mod plan;

pub use log::{format_csv, parse_csv, RoundLog, CSV_HEADER};
pub use plan::{epoch_size, rounds_for_budget, KappaSchedule, Strategy, TrainPlan, DEFAULT_ETA};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{sample_minibatch_from, Graph, NeighborMode};
use crate::metrics::{evaluate_all, feature_bytes, measure_discrepancy, model_bytes};
use crate::model::{apply_update, average_models, loss_and_grad, Model, OptimizerState};
use crate::partition::Partition;
use crate::rng::{stream, Purpose, Rng};

/// One simulated machine.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub machine: usize,
    pub model: Model,
    /// Survives rounds; never averaged.
    pub optimizer: OptimizerState,
}

/// Called with the worker models and their average, before any correction.
pub type AverageObserver<'a> = dyn Fn(usize, &[Model], &Model) + Sync + 'a;

#[derive(Default, Clone, Copy)]
pub struct RunOptions<'a> {
    /// Worker thread cap; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub observer: Option<&'a AverageObserver<'a>>,
}

fn worker_rng(plan: &TrainPlan, machine: usize, round: usize) -> Rng {
    stream(plan.seed, Purpose::LocalBatch, machine as u32, round as u32)
}

fn sampled(plan: &TrainPlan, model: &Model) -> NeighborMode {
    NeighborMode::Sampled {
        fanout: plan.fanout,
        depth: model.arch().depth(),
    }
}

/// `iters` sampled SGD steps of one model on `graph`, batches drawn from `pool`.
fn train_on(
    graph: &Graph,
    pool: &[usize],
    model: &mut Model,
    optimizer: &mut OptimizerState,
    plan: &TrainPlan,
    iters: usize,
    rng: &mut Rng,
) -> Result<()> {
    if pool.is_empty() {
        return Ok(());
    }
    let batch_size = plan.local_batch.min(pool.len());
    let mode = sampled(plan, model);
    for _ in 0..iters {
        let batch = sample_minibatch_from(graph, pool, batch_size, mode, rng)?;
        let (_, grad) = loss_and_grad(graph, model, &batch)?;
        apply_update(model, &grad, plan.eta, optimizer)?;
    }
    Ok(())
}

/// Local phase: each worker runs the round's iterations on its own subgraph.
pub fn run_round_local(
    workers: &mut [WorkerState],
    partition: &Partition,
    plan: &TrainPlan,
    round: usize,
) -> Result<()> {
    let iters = plan.local_iterations(round);
    workers.par_iter_mut().try_for_each(|w| {
        let local = &partition.local(w.machine).graph;
        let pool = local.train_nodes();
        let mut rng = worker_rng(plan, w.machine, round);
        train_on(local, &pool, &mut w.model, &mut w.optimizer, plan, iters, &mut rng)
            .map_err(|e| e.on_machine(w.machine))
    })
}

/// Averages the workers and applies the plan's correction steps on the global
/// graph. Returns the new global model and the bytes moved.
pub fn server_round(
    workers: &[WorkerState],
    plan: &TrainPlan,
    round: usize,
    graph: &Graph,
    observer: Option<&AverageObserver<'_>>,
) -> Result<(Model, u64)> {
    let models: Vec<Model> = workers.iter().map(|w| w.model.clone()).collect();
    let mut global = average_models(&models)?;
    if let Some(f) = observer {
        f(round, &models, &global);
    }
    let steps = plan.server_steps();
    if steps > 0 {
        let pool = graph.train_nodes();
        if pool.is_empty() {
            return Err(Error::invalid("server_batch", "the graph has no training nodes"));
        }
        let batch_size = plan.server_batch.min(pool.len());
        let mode = match plan.correction_fanout {
            Some(fanout) => NeighborMode::Sampled {
                fanout,
                depth: global.arch().depth(),
            },
            None => NeighborMode::Full,
        };
        let mut rng = stream(plan.seed, Purpose::ServerBatch, 0, round as u32);
        let mut sgd = OptimizerState::Sgd;
        for _ in 0..steps {
            let batch = sample_minibatch_from(graph, &pool, batch_size, mode, &mut rng)?;
            let (_, grad) = loss_and_grad(graph, &global, &batch)?;
            apply_update(&mut global, &grad, plan.gamma, &mut sgd)?;
        }
    }
    let bytes = 2 * workers.len() as u64 * model_bytes(&global);
    Ok((global, bytes))
}

/// One round of global graph sampling: every iteration each worker samples
/// against the whole graph, pays for the remote features it touches, and the
/// models are averaged. Returns the synchronized model and the bytes moved.
pub fn run_ggs_round(
    workers: &mut [WorkerState],
    partition: &Partition,
    graph: &Graph,
    plan: &TrainPlan,
    round: usize,
) -> Result<(Model, u64)> {
    let pools: Vec<Vec<usize>> = workers
        .iter()
        .map(|w| partition.train_nodes_global(w.machine))
        .collect();
    let mut rngs: Vec<Rng> = workers.iter().map(|w| worker_rng(plan, w.machine, round)).collect();
    let dim = graph.feature_dim();
    let mut bytes = 0u64;
    let mut global = match workers.first() {
        Some(w) => w.model.clone(),
        None => return Err(Error::invalid("machines", "no workers")),
    };
    for _ in 0..plan.k {
        let remote: Vec<u64> = workers
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(pools.par_iter())
            .map(|((w, rng), pool)| {
                if pool.is_empty() {
                    return Ok(0);
                }
                let batch_size = plan.local_batch.min(pool.len());
                let batch = sample_minibatch_from(graph, pool, batch_size, sampled(plan, &w.model), rng)?;
                let remote = batch
                    .input_nodes()
                    .iter()
                    .filter(|&&v| partition.machine_of(v) != w.machine)
                    .count();
                let (_, grad) = loss_and_grad(graph, &w.model, &batch)?;
                apply_update(&mut w.model, &grad, plan.eta, &mut w.optimizer)?;
                Ok(feature_bytes(remote, dim))
            })
            .collect::<Result<Vec<u64>>>()?;
        let models: Vec<Model> = workers.iter().map(|w| w.model.clone()).collect();
        global = average_models(&models)?;
        for w in workers.iter_mut() {
            w.model.clone_from(&global);
        }
        bytes += remote.iter().sum::<u64>() + 2 * workers.len() as u64 * model_bytes(&global);
    }
    Ok((global, bytes))
}

fn check_inputs(graph: &Graph, partition: &Partition, plan: &TrainPlan, model: &Model) -> Result<()> {
    plan.validate()?;
    if plan.strategy != Strategy::Single && plan.machines != partition.num_parts() {
        return Err(Error::invalid(
            "machines",
            format!(
                "plan has {} machines, partition has {}",
                plan.machines,
                partition.num_parts()
            ),
        ));
    }
    if partition.assignment().len() != graph.num_nodes() {
        return Err(Error::LengthMismatch {
            what: "partition",
            expected: graph.num_nodes(),
            actual: partition.assignment().len(),
        });
    }
    if model.dims()[0] != graph.feature_dim() || model.num_classes() != graph.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "model dims {:?} do not fit {} features and {} classes",
            model.dims(),
            graph.feature_dim(),
            graph.num_classes()
        )));
    }
    if graph.train_nodes().is_empty() {
        return Err(Error::invalid("graph", "no training nodes"));
    }
    Ok(())
}

fn run_rounds(
    graph: &Graph,
    partition: &Partition,
    plan: &TrainPlan,
    init: &Model,
    observer: Option<&AverageObserver<'_>>,
) -> Result<Vec<RoundLog>> {
    let machines = match plan.strategy {
        Strategy::Single => 1,
        _ => plan.machines,
    };
    let mut workers: Vec<WorkerState> = (0..machines)
        .map(|machine| WorkerState {
            machine,
            model: init.clone(),
            optimizer: OptimizerState::new(plan.optimizer),
        })
        .collect();
    let single_pool = graph.train_nodes();
    let mut global = init.clone();
    let mut iters_cum = 0u64;
    let mut bytes_cum = 0u64;
    let mut logs = Vec::with_capacity(plan.rounds);
    for round in 1..=plan.rounds {
        let mut step = || -> Result<(Model, u64)> {
            match plan.strategy {
                Strategy::Single => {
                    let w = &mut workers[0];
                    let mut rng = worker_rng(plan, 0, round);
                    train_on(
                        graph,
                        &single_pool,
                        &mut w.model,
                        &mut w.optimizer,
                        plan,
                        plan.k,
                        &mut rng,
                    )?;
                    Ok((w.model.clone(), 0))
                }
                Strategy::Ggs => run_ggs_round(&mut workers, partition, graph, plan, round),
                Strategy::PsgdPa | Strategy::Llcg => {
                    for w in workers.iter_mut() {
                        w.model.clone_from(&global);
                    }
                    run_round_local(&mut workers, partition, plan, round)?;
                    server_round(&workers, plan, round, graph, observer)
                }
            }
        };
        let (model, bytes) = step().map_err(|e| e.in_round(round))?;
        global = model;
        iters_cum += plan.local_iterations(round) as u64;
        bytes_cum += bytes;
        let eval = evaluate_all(graph, &global).map_err(|e| e.in_round(round))?;
        let (kappa_a_sq, kappa_x_sq) = if plan.kappa.includes(round, plan.rounds) {
            let d = measure_discrepancy(graph, partition, &global).map_err(|e| e.in_round(round))?;
            (Some(d.kappa_a_sq), Some(d.kappa_x_sq))
        } else {
            (None, None)
        };
        logs.push(RoundLog {
            round,
            iters_cum,
            bytes_cum,
            train_loss: eval.train_loss,
            val_acc: eval.val_acc,
            test_acc: eval.test_acc,
            grad_norm_sq: eval.grad_norm_sq,
            kappa_a_sq,
            kappa_x_sq,
        });
    }
    Ok(logs)
}

/// Runs the plan's strategy for `plan.rounds` rounds from `init`, evaluating
/// the global model on the full graph after each round.
pub fn run_experiment(
    graph: &Graph,
    partition: &Partition,
    plan: &TrainPlan,
    init: &Model,
    options: &RunOptions<'_>,
) -> Result<Vec<RoundLog>> {
    check_inputs(graph, partition, plan, init)?;
    match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            pool.install(|| run_rounds(graph, partition, plan, init, options.observer))
        }
        None => run_rounds(graph, partition, plan, init, options.observer),
    }
}
