use soundocc::data::{
    filter_analysis_window, generate_synthetic, ingest_slots, read_truth, write_slots, write_truth, FilterOptions,
    GeneratorSpec, SlotFormat, SynthRoom,
};
use soundocc::energy::{energy_by_room, energy_slots, summarize_energy, EnergyConstants};
use soundocc::neural::{PipelineConfig, TrainConfig};
use soundocc::occupancy::{
    detect_classifier, detect_cluster, detect_semi_supervised, detect_threshold, evaluate, midpoint_thresholds,
    read_verdicts, slot_features, train_occupancy_models, write_verdicts, ClusterSearch, TrainingOptions,
};

fn spec() -> GeneratorSpec {
    GeneratorSpec {
        seed: 21,
        rooms: vec![
            SynthRoom {
                room_id: "A".into(),
                noise_scale: 1.0,
            },
            SynthRoom {
                room_id: "B".into(),
                noise_scale: 1.5,
            },
        ],
        ..GeneratorSpec::default()
    }
}

fn options() -> TrainingOptions {
    TrainingOptions {
        pipeline: PipelineConfig {
            train: TrainConfig {
                seed: 21,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        },
        ..TrainingOptions::default()
    }
}

#[test]
fn synthetic_data_runs_end_to_end() {
    let data = generate_synthetic(&spec(), 4).unwrap();
    let slots = filter_analysis_window(&data.records, &FilterOptions::default());
    assert_eq!(slots.len(), 2 * 4 * 132);

    let rooms = midpoint_thresholds(&slots, &data.truth).unwrap();
    let threshold = detect_threshold(&slots, &rooms).unwrap();
    assert_eq!(evaluate(&threshold, &data.truth).unwrap().accuracy, 1.0);

    let search = ClusterSearch::default();
    let features = slot_features(&slots, search.pooled).unwrap();
    let (clusters, reports) = detect_cluster(&features, &search).unwrap();
    assert_eq!(clusters.len(), slots.len());
    assert_eq!(reports.keys().collect::<Vec<_>>(), ["A", "B"]);

    let trained = train_occupancy_models(&slots, &rooms, &options()).unwrap();
    assert!(trained.metrics.classifier.final_loss < trained.metrics.classifier.initial_loss);
    let classifier = detect_classifier(&slots, &trained.classifier).unwrap();
    let report = evaluate(&classifier, &data.truth).unwrap();
    assert!(report.accuracy > 0.9, "{report:?} {:?}", trained.metrics);
    let (semi, _) = detect_semi_supervised(&slots, &features, &trained.classifier, &search).unwrap();
    let report = evaluate(&semi, &data.truth).unwrap();
    assert!(report.accuracy > 0.9, "{report:?}");

    let constants = EnergyConstants::default();
    let energy = energy_slots(&slots, &semi, &constants).unwrap();
    let summary = summarize_energy(&energy, &constants);
    assert_eq!(summary.total_slots, slots.len());
    let occupied = summary.occupied.as_ref().unwrap();
    let unoccupied = summary.unoccupied.as_ref().unwrap();
    assert!(occupied.mean_room_temp > unoccupied.mean_room_temp);
    assert_eq!(occupied.count + unoccupied.count, slots.len());
    let per_room = energy_by_room(&energy, &constants);
    assert_eq!(per_room.len(), 2);
    assert_eq!(per_room.values().map(|r| r.total_slots).sum::<usize>(), slots.len());
}

fn ext(format: SlotFormat) -> &'static str {
    match format {
        SlotFormat::Csv => "csv",
        SlotFormat::Jsonl => "jsonl",
    }
}

#[test]
fn files_round_trip_through_ingest() {
    let data = generate_synthetic(&spec(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for format in [SlotFormat::Csv, SlotFormat::Jsonl] {
        let path = dir.path().join(format!("slots.{}", ext(format)));
        write_slots(&path, format, &data.records, Some("test")).unwrap();
        let back = ingest_slots(&path, format, true).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.records.len(), data.records.len());
        for (a, b) in back.records.iter().zip(&data.records) {
            assert_eq!(a.key(), b.key());
            assert_eq!(a.histogram, b.histogram);
            assert_eq!(a.noise_sum, b.noise_sum);
            assert_eq!(a.room_temp, b.room_temp);
            assert_eq!(a.air_volume, b.air_volume);
        }
    }

    let truth_path = dir.path().join("truth.csv");
    write_truth(&truth_path, &data.truth, None).unwrap();
    assert_eq!(read_truth(&truth_path).unwrap(), data.truth);

    let rooms = midpoint_thresholds(&data.records, &data.truth).unwrap();
    let verdicts = detect_threshold(&data.records, &rooms).unwrap();
    for format in [SlotFormat::Csv, SlotFormat::Jsonl] {
        let path = dir.path().join(format!("verdicts.{}", ext(format)));
        write_verdicts(&path, format, &verdicts, Some("test")).unwrap();
        assert_eq!(read_verdicts(&path).unwrap(), verdicts);
    }
}

#[test]
fn strict_ingest_names_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "room_id,slot_start,bin1,bin2,bin3,bin4,bin5,bin6,bin7,bin8,room_temp_c,supply_temp_c,air_volume_m3\n\
         A,2017-11-01T08:00:00Z,3000,0,0,0,0,0,0,0,25,15,150\n\
         A,2017-11-01T08:05:00Z,ten,0,0,0,0,0,0,0,25,15,150\n",
    )
    .unwrap();
    let lenient = ingest_slots(&path, SlotFormat::Csv, false).unwrap();
    assert_eq!(lenient.records.len(), 1);
    assert_eq!(lenient.rejected.len(), 1);
    let err = ingest_slots(&path, SlotFormat::Csv, true).unwrap_err().to_string();
    assert!(err.contains("bad.csv:3:"), "{err}");
}
