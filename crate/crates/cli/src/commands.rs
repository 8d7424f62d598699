use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use gsne::config::Config;
use gsne::dataprep::{gen_synthetic_city, ingest_dir, prepare};
use gsne::eval::{EvalReport, RegressorSpec};
use gsne::geo_graph::{load_graph, save_graph, DistanceMode, EdgeSetKind};
use gsne::gradcheck::{run_toy, FD_STEP};
use gsne::pipeline;
use gsne::trainer::{
    export_embeddings, load_checkpoint, run_until, save_checkpoint, write_loss_csv, Alternation, EmbeddingTable,
    OptimizerKind, Proximity, TrainState,
};
use gsne::{Execution, GsneError};

use crate::args::*;
use crate::CliError;

type CliResult<T = ()> = std::result::Result<T, CliError>;

const STATE_FILE: &str = "state.ckpt";
const GRAPH_POINTER: &str = "graph.path";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse<T: FromStr<Err = GsneError>>(slot: &mut T, value: &Option<String>) -> CliResult {
    if let Some(v) = value {
        *slot = v.parse()?;
    }
    Ok(())
}

fn load_config(global: &GlobalArgs) -> CliResult<Config> {
    let mut config = match &global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = global.seed {
        config.set_seed(s);
    }
    if global.sequential {
        config.train.execution = Execution::Sequential;
    }
    Ok(config)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| GsneError::io(dir, e).into())
}

fn create_parent(file: &Path) -> CliResult {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn apply_graph(config: &mut Config, a: &GraphArgs) -> CliResult {
    let g = &mut config.graph;
    set(&mut g.house_school_radius, a.house_school_radius);
    set(&mut g.house_station_radius, a.house_station_radius);
    set(&mut g.school_station_radius, a.school_station_radius);
    set(&mut g.k_nearest_stations, a.k_nearest_stations);
    set(&mut g.delta_min, a.delta_min);
    parse::<DistanceMode>(&mut g.distance_mode, &a.distance_mode)?;
    g.validate()?;
    Ok(())
}

fn apply_training(config: &mut Config, a: &TrainingArgs) -> CliResult {
    let t = &mut config.train;
    parse::<Proximity>(&mut t.proximity, &a.proximity)?;
    set(&mut t.iterations, a.iters);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.negatives, a.negatives);
    set(&mut t.learning_rate, a.learning_rate);
    parse::<OptimizerKind>(&mut t.optimizer, &a.optimizer)?;
    parse::<Alternation>(&mut t.alternation, &a.alternation)?;
    set(&mut t.encoder.embed_dim, a.embed_dim);
    if let Some(list) = &a.edge_sets {
        t.edge_sets = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(EdgeSetKind::from_str)
            .collect::<Result<_, _>>()?;
    }
    t.validate()?;
    Ok(())
}

fn apply_models(config: &mut Config, a: &ModelArgs) {
    let m = &mut config.eval.models;
    set(&mut m.ridge_lambda, a.ridge_lambda);
    set(&mut m.krr_lambda, a.krr_lambda);
    if a.krr_bandwidth.is_some() {
        m.krr_bandwidth = a.krr_bandwidth;
    }
    set(&mut m.gbt.trees, a.gbt_trees);
    set(&mut m.gbt.max_depth, a.gbt_depth);
    set(&mut m.gbt.shrinkage, a.gbt_shrinkage);
    set(&mut m.gbt.subsample, a.gbt_subsample);
}

pub fn run(cli: Cli) -> CliResult {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Command::GenSynth(a) => gen_synth(&mut config, a),
        Command::BuildGraph(a) => build_graph(&mut config, a),
        Command::Train(a) => train(&mut config, a),
        Command::Export(a) => export(&config, a),
        Command::Eval(a) => eval(&mut config, a),
        Command::Ablate(a) => ablate(&mut config, a),
        Command::Gradcheck(a) => gradcheck(&config, a),
    }
}

fn gen_synth(config: &mut Config, a: GenSynthArgs) -> CliResult {
    let s = &mut config.synth;
    set(&mut s.houses, a.houses);
    set(&mut s.regions, a.regions);
    set(&mut s.schools, a.schools);
    set(&mut s.stations, a.stations);
    set(&mut s.region_weight, a.region_weight);
    set(&mut s.school_weight, a.school_weight);
    set(&mut s.station_weight, a.station_weight);
    set(&mut s.noise_std, a.noise_std);
    set(&mut s.missing_rate, a.missing_rate);
    let city = gen_synthetic_city(s)?;
    create_dir(&a.out)?;
    city.write(&a.out)?;
    info!(
        "wrote a city of {} houses to {}",
        city.tables.houses.len(),
        a.out.display()
    );
    Ok(())
}

fn build_graph(config: &mut Config, a: BuildGraphArgs) -> CliResult {
    apply_graph(config, &a.graph)?;
    set(&mut config.eval.train_fraction, a.train_fraction);
    let tables = ingest_dir(&a.data)?;
    let prepared = prepare(&tables, config.eval.train_fraction, config.seed())?;
    let artifact = pipeline::build_artifact(&prepared, &config.graph)?;
    create_parent(&a.out)?;
    save_graph(&artifact, &a.out)?;
    if let Some(p) = &a.preprocess_report {
        create_parent(p)?;
        prepared.report.write(p)?;
    }
    let g = &artifact.graph;
    info!(
        "graph with {} nodes and {} edges ({} held-out houses) written to {}",
        g.node_count(),
        g.edge_count(),
        prepared.heldout.len(),
        a.out.display()
    );
    Ok(())
}

fn train(config: &mut Config, a: TrainArgs) -> CliResult {
    let artifact = load_graph(&a.graph)?;
    let state_path = a.out.join(STATE_FILE);
    let mut state = if a.resume {
        let mut s = load_checkpoint(&state_path)?;
        let t = &a.training;
        if t.proximity.is_some()
            || t.batch_size.is_some()
            || t.negatives.is_some()
            || t.learning_rate.is_some()
            || t.optimizer.is_some()
            || t.alternation.is_some()
            || t.embed_dim.is_some()
            || t.edge_sets.is_some()
        {
            warn!("training flags other than --iters are ignored when resuming");
        }
        if let Some(t) = a.training.iters {
            s.config.iterations = t;
        }
        s.config.execution = config.train.execution;
        info!("resuming at iteration {} of {}", s.iteration, s.config.iterations);
        s
    } else {
        apply_training(config, &a.training)?;
        set(&mut config.train.checkpoint_every, a.checkpoint_every);
        TrainState::init(&artifact.graph, &config.train)?
    };
    create_dir(&a.out)?;
    let until = state.config.iterations;
    run_until(&mut state, &artifact.graph, until, |s| save_checkpoint(s, &state_path))?;
    save_checkpoint(&state, &state_path)?;
    write_loss_csv(&state, &a.out)?;
    let source = std::fs::canonicalize(&a.graph).unwrap_or_else(|_| a.graph.clone());
    let pointer = a.out.join(GRAPH_POINTER);
    std::fs::write(&pointer, format!("{}\n", source.display())).map_err(|e| GsneError::io(&pointer, e))?;
    info!("checkpoint written to {}", state_path.display());
    Ok(())
}

fn export(config: &Config, a: ExportArgs) -> CliResult {
    let state = load_checkpoint(&a.ckpt.join(STATE_FILE))?;
    let graph_path = match a.graph {
        Some(p) => p,
        None => {
            let pointer = a.ckpt.join(GRAPH_POINTER);
            let text = std::fs::read_to_string(&pointer).map_err(|e| GsneError::io(&pointer, e))?;
            PathBuf::from(text.trim())
        }
    };
    let artifact = load_graph(&graph_path)?;
    let table = export_embeddings(&state, &artifact.graph, artifact.heldout.as_ref(), config.train.execution)?;
    create_parent(&a.out)?;
    table.write_csv(&a.out)?;
    info!("{} embeddings of width {} written to {}", table.rows.len(), table.width(), a.out.display());
    Ok(())
}

fn eval(config: &mut Config, a: EvalArgs) -> CliResult {
    apply_models(config, &a.models);
    let e = &mut config.eval;
    set(&mut e.regressors, a.regressors);
    set(&mut e.feature_sets, a.feature_sets);
    set(&mut e.train_fraction, a.train_fraction);
    set(&mut e.bootstrap_level, a.bootstrap_level);
    e.include_variance |= a.include_variance;
    let replicates = a.bootstrap.unwrap_or(0);
    let mut proximity = config.train.proximity;
    parse::<Proximity>(&mut proximity, &a.emb_proximity)?;

    let tables = ingest_dir(&a.data)?;
    let prepared = prepare(&tables, config.eval.train_fraction, config.seed())?;
    let table = EmbeddingTable::read_csv(&a.emb)?;
    let exec = config.train.execution;
    let mut report = pipeline::evaluate_embeddings(
        &prepared,
        &tables,
        &table,
        proximity.orders(),
        &config.eval,
        config.seed(),
        exec,
    )?;
    if replicates > 0 {
        let sets = pipeline::filter_sets(
            pipeline::feature_sets(&prepared, &tables, &table, proximity.orders(), config.eval.include_variance)?,
            &config.eval.feature_sets,
        )?;
        let specs = config.eval.models.parse_list(&config.eval.regressors)?;
        report.bootstrap = pipeline::bootstrap_rows(
            &sets,
            &specs,
            &prepared.log_price,
            replicates,
            config.eval.bootstrap_level,
            config.eval.train_fraction,
            config.seed(),
            exec,
        )?;
    }
    report.write_dir(&a.report)?;
    print!("{}", report.to_text());
    Ok(())
}

fn ablate(config: &mut Config, a: AblateArgs) -> CliResult {
    apply_graph(config, &a.graph)?;
    apply_training(config, &a.training)?;
    apply_models(config, &a.models);
    set(&mut config.eval.train_fraction, a.train_fraction);
    let name = a.regressor.unwrap_or_else(|| "gbt".into());
    let specs: Vec<RegressorSpec> = config.eval.models.parse_list(&name)?;
    let [spec] = specs.as_slice() else {
        return Err(CliError::Usage("--regressor takes exactly one name".into()));
    };

    let tables = ingest_dir(&a.data)?;
    let prepared = prepare(&tables, config.eval.train_fraction, config.seed())?;
    let artifact = pipeline::build_artifact(&prepared, &config.graph)?;
    let ablation = pipeline::poi_ablation(
        &prepared,
        &tables,
        &artifact,
        &config.train,
        spec,
        config.eval.include_variance,
        config.seed(),
    )?;
    let report = EvalReport {
        ablation,
        ..EvalReport::default()
    };
    report.write_dir(&a.report)?;
    print!("{}", report.to_text());
    Ok(())
}

fn gradcheck(config: &Config, a: GradcheckArgs) -> CliResult {
    if !a.toy {
        return Err(CliError::Usage("gradcheck currently supports only --toy".into()));
    }
    let report = run_toy(config.seed())?;
    for c in &report.checks {
        println!(
            "{:<7} params {:>4}  max relative error {:.3e}  (worst: {})",
            c.order.name(),
            c.params_checked,
            c.max_rel_error,
            c.worst_param
        );
    }
    let worst = report.max_rel_error();
    println!("max relative error {worst:.3e} (step {FD_STEP:e}, tolerance {GRADCHECK_TOLERANCE:e})");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(GsneError::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        ))
        .into())
    }
}
