use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use busdev_core::features::{encode_into, Dataset, SegmentKey, WeatherIndex};
use busdev_core::ingest::{self, StopLocation};
use busdev_core::nn::{ablation_preset, param_count, Model, NetworkSpec};
use busdev_core::preprocess::{self, TripSegment};
use busdev_core::synth;
use busdev_core::train_eval::{
    self, ablate as run_ablation, evaluate, measure_latency, predict_departure, prepare,
    select_optimal, write_ablation, write_history, write_report, ReportBundle,
};
use busdev_core::{Error, Exec};

use crate::config::RunConfig;
use crate::CliError;

fn require(paths: &[&Path]) -> Result<(), CliError> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(CliError::MissingInput(p.to_path_buf())),
        None => Ok(()),
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))?)
}

fn load_weather(cfg: &RunConfig) -> Result<(WeatherIndex, usize), CliError> {
    let (obs, rejects) =
        ingest::parse_weather(ingest::open(&cfg.weather_path())?, &cfg.parse_config())?;
    Ok((WeatherIndex::new(obs), rejects.len()))
}

fn load_stops(cfg: &RunConfig) -> Result<BTreeMap<String, StopLocation>, CliError> {
    Ok(ingest::parse_stops(
        ingest::open(&cfg.stops_path())?,
        &cfg.parse_config(),
    )?)
}

fn load_segments(cfg: &RunConfig) -> Result<(String, Vec<TripSegment>), CliError> {
    let path = cfg.segments_path();
    let (version, segments) = preprocess::read_segments(ingest::open(&path)?)?;
    if segments.is_empty() {
        return Err(Error::Empty("segments file").into());
    }
    Ok((
        version.unwrap_or_else(|| cfg.schema_version.clone()),
        segments,
    ))
}

struct TrainingData {
    prepared: train_eval::Prepared,
}

fn training_data(cfg: &RunConfig) -> Result<TrainingData, CliError> {
    let segments_path = cfg.segments_path();
    require(&[&segments_path, &cfg.weather_path(), &cfg.stops_path()])?;
    let (version, segments) = load_segments(cfg)?;
    let (weather, _) = load_weather(cfg)?;
    let stops = load_stops(cfg)?;
    let schema = cfg.schema(version, &segments);
    let prepared = prepare(&segments, &weather, &stops, schema, &cfg.train_config())?;
    Ok(TrainingData { prepared })
}

pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let (dep, wx, st) = (cfg.departures_path(), cfg.weather_path(), cfg.stops_path());
    require(&[&dep, &wx, &st])?;
    let parse = cfg.parse_config();
    let (records, rejects) = ingest::parse_departures(ingest::open(&dep)?, &parse)?;
    let (weather_obs, weather_rejects) = ingest::parse_weather(ingest::open(&wx)?, &parse)?;
    let stops = ingest::parse_stops(ingest::open(&st)?, &parse)?;
    let summary = preprocess::dataset_stats(&records)?;
    let rows = records.len() + rejects.len();
    let cleaned = preprocess::clean(records, cfg.k, Exec::Parallel)?;

    preprocess::write_segments(
        create(&cfg.segments_path())?,
        &cfg.schema_version,
        &cleaned.segments,
    )?;
    ingest::write_rejects(create(&cfg.workdir.join("rejects.csv"))?, &rejects)?;
    ingest::write_rejects(
        create(&cfg.workdir.join("weather_rejects.csv"))?,
        &weather_rejects,
    )?;

    let s = &cleaned.stats;
    println!("departure rows          {rows}");
    println!("  parsed records        {}", summary.n);
    println!("  rejected rows         {}", rejects.len());
    println!(
        "weather observations    {} ({} rejected)",
        weather_obs.len(),
        weather_rejects.len()
    );
    println!("stop locations          {}", stops.len());
    println!("half-trips              {}", summary.trips);
    println!("routes                  {}", summary.routes);
    println!("distinct stops          {}", summary.stops);
    println!(
        "delayed share           {:.2}%",
        summary.delayed_fraction * 100.0
    );
    println!("deviation mean (s)      {:.3}", s.mean);
    println!("deviation std (s)       {:.3}", s.std_dev);
    println!("k                       {}", s.k);
    println!("low threshold (s)       {:.3}", s.low);
    println!("high threshold (s)      {:.3}", s.high);
    println!("outliers removed        {}", cleaned.outliers_removed);
    println!("duplicate orders        {}", cleaned.duplicate_orders);
    println!("single-stop trips       {}", cleaned.single_stop_trips);
    println!("segments                {}", cleaned.segments.len());
    println!("wrote {}", cfg.segments_path().display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let TrainingData { prepared } = training_data(cfg)?;
    let spec = NetworkSpec::new(prepared.schema.total_dims(), cfg.hidden.clone(), 1);
    let tc = cfg.train_config();
    let (net, history) = train_eval::train(&spec, &prepared.train, &prepared.val, &tc)?;
    println!("model {spec} ({} parameters)", param_count(&spec));
    println!(
        "examples: train {}, val {}, test {}",
        prepared.train.len(),
        prepared.val.len(),
        prepared.test.len()
    );
    for h in &history {
        println!(
            "epoch {:>3}  train MSE {:>14.4}  val MSE {:>14.4}",
            h.epoch, h.train_mse, h.val_mse
        );
    }
    let model = Model::new(net, prepared.scaler, prepared.schema)?;
    model.save(&cfg.model_path())?;
    write_history(&cfg.history_path(), &history)?;
    println!("wrote {}", cfg.model_path().display());
    Ok(())
}

pub fn ablate(cfg: &RunConfig, specs: Option<&str>) -> Result<(), CliError> {
    let TrainingData { prepared } = training_data(cfg)?;
    let dims = prepared.schema.total_dims();
    let specs: Vec<NetworkSpec> = match specs {
        None => ablation_preset(dims),
        Some(list) => list
            .split(';')
            .map(|h| NetworkSpec::parse_hidden(h).map(|hidden| NetworkSpec::new(dims, hidden, 1)))
            .collect::<busdev_core::Result<_>>()
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let rows = run_ablation(&specs, &prepared, &cfg.train_config())?;
    write_ablation(&cfg.ablation_path(), &rows)?;
    println!(
        "{:<28} {:>9} {:>9} {:>12} {:>12}",
        "spec", "params", "MACs", "val RMSE", "test RMSE"
    );
    for r in &rows {
        println!(
            "{:<28} {:>9} {:>9} {:>12.4} {:>12.4}",
            r.spec.to_string(),
            r.params,
            r.macs,
            r.val_rmse,
            r.test_rmse
        );
    }
    if let Some(i) = select_optimal(&rows) {
        println!(
            "selected {} (fewest parameters within {:.1}% of the best validation RMSE)",
            rows[i].spec,
            train_eval::SELECTION_TOLERANCE * 100.0
        );
    }
    println!("wrote {}", cfg.ablation_path().display());
    Ok(())
}

pub fn predict(cfg: &RunConfig, model_path: &Path, queries: &Path) -> Result<(), CliError> {
    require(&[model_path, queries, &cfg.weather_path(), &cfg.stops_path()])?;
    let model = Model::load(model_path)?;
    let rows = preprocess::read_queries(ingest::open(queries)?)?;
    if rows.is_empty() {
        return Err(Error::Empty("query file").into());
    }
    if let Some((version, _)) = rows.iter().find(|(v, _)| *v != model.schema.version) {
        return Err(Error::SchemaMismatch {
            model: model.schema.version.clone(),
            input: version.clone(),
        }
        .into());
    }
    let (weather, _) = load_weather(cfg)?;
    let stops = load_stops(cfg)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e| CliError::Runtime(format!("cannot write output: {e}"));
    writeln!(
        out,
        "route_id,half_trip_id,next_stop_id,scheduled,d_pred_s,t_pred"
    )
    .map_err(io)?;
    let dims = model.schema.total_dims();
    let mut encoded = Vec::new();
    let mut failures = 0usize;
    for (i, (_, q)) in rows.iter().enumerate() {
        let ctx = q.context();
        match predict_departure(&model, &ctx, &weather, &stops) {
            Ok(p) => {
                writeln!(
                    out,
                    "{},{},{},{},{:.3},{}",
                    q.route_id,
                    q.half_trip_id,
                    q.next.stop_id,
                    q.next.scheduled_time.format("%Y-%m-%dT%H:%M:%S"),
                    p.deviation_s,
                    p.departure.format("%Y-%m-%dT%H:%M:%S")
                )
                .map_err(io)?;
                let mut x = vec![0.0; dims];
                encode_into(&ctx, &weather, &stops, &model.schema, &mut x)?;
                model.scaler.apply(&mut x);
                encoded.push(x);
            }
            Err(e) => {
                failures += 1;
                eprintln!("query {} ({}): {e}", i + 1, q.half_trip_id);
            }
        }
    }
    out.flush().map_err(io)?;
    if failures == rows.len() {
        return Err(CliError::Runtime(format!("all {failures} queries failed")));
    }
    let n = encoded.len();
    let key = |q: &busdev_core::preprocess::SegmentQuery| SegmentKey {
        service_date: q.service_date,
        half_trip_id: q.half_trip_id.clone(),
        next_order: q.next.timepoint_order,
    };
    let keys = rows.iter().map(|(_, q)| key(q)).take(n).collect();
    let data = Dataset::from_rows(encoded, vec![0.0; n], vec![0; n], keys)?;
    let rounds = (20_000 / n).max(1);
    let latency = measure_latency(&model.network, &data, rounds)?;
    eprintln!(
        "mean inference latency: {:.2} µs per sample over {} passes",
        latency.as_secs_f64() * 1e6,
        rounds * n
    );
    if failures > 0 {
        eprintln!("{failures} of {} queries failed", rows.len());
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let data = synth::generate(&cfg.synth, Exec::Parallel)?;
    let paths = data.write_bundle(&cfg.workdir)?;
    println!(
        "{} departures over {} routes, {} segments ({} process, noise σ = {} s)",
        data.departures.len(),
        cfg.synth.n_routes,
        data.truth.len(),
        cfg.synth.process.as_str(),
        cfg.synth.noise_std
    );
    for p in [
        &paths.departures,
        &paths.weather,
        &paths.stops,
        &paths.ground_truth,
    ] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn report(cfg: &RunConfig, model_path: &Path, out: &PathBuf) -> Result<(), CliError> {
    require(&[model_path, &cfg.history_path()])?;
    let model = Model::load(model_path)?;
    let TrainingData { prepared } = training_data(cfg)?;
    if prepared.scaler != model.scaler || prepared.schema.routes() != model.schema.routes() {
        return Err(Error::Misaligned(
            "model was trained on a different split, seed or segments file".into(),
        )
        .into());
    }
    let eval = evaluate(
        &model.network,
        &prepared.test,
        &model.schema,
        Exec::Parallel,
    )?;
    let history = train_eval::read_history(&cfg.history_path())?;
    let spec = model.network.spec();
    let bundle = ReportBundle {
        eval: &eval,
        history: &history,
        ablation: None,
        context: vec![
            format!(
                "model                 {spec} ({} parameters)",
                param_count(spec)
            ),
            format!("schema                {}", model.schema.version),
            format!("seed                  {}", cfg.seed),
        ],
    };
    write_report(out, &bundle)?;
    let ablation = cfg.ablation_path();
    if ablation.is_file() {
        std::fs::copy(&ablation, out.join("ablation.csv")).map_err(|e| Error::io(&ablation, e))?;
    }
    print!(
        "{}",
        std::fs::read_to_string(out.join("summary.txt")).map_err(|e| Error::io(out, e))?
    );
    println!("wrote {}", out.display());
    Ok(())
}
