mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::{call, count, json, Raw};
use rtoverlap::metrics::v_x;
use rtoverlap::phantom::presets;
use rtoverlap::service::{router, AppState};
use rtoverlap::{generate_phantom, AnalysisConfig, PlanAnalysis};
use serde_json::Value;

fn app_for(preset: &str) -> axum::Router {
    let plan = generate_phantom(&presets::by_name(preset).unwrap()).unwrap();
    router(AppState::new(PlanAnalysis::new(plan, AnalysisConfig::default()).unwrap()))
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, "GET", uri, "").await;
    (status, json(&body))
}

async fn post(app: &axum::Router, body: &str) -> (StatusCode, Value) {
    let (status, bytes) = call(app, "POST", "/api/v1/dose-regions", body).await;
    (status, json(&bytes))
}

#[tokio::test]
async fn no_plan_answers_service_unavailable() {
    let app = router(AppState::empty());
    for uri in ["/api/v1/plan", "/api/v1/graph", "/api/v1/records", "/api/v1/point?x=0&y=0&z=0"] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"], "service_unavailable");
    }
    let (status, body) = get(&app, "/api/v1/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["plan_loaded"], false);
}

#[tokio::test]
async fn error_statuses() {
    let app = app_for("slab");
    let cases = [
        ("/api/v1/records?reference=Nope", StatusCode::NOT_FOUND, "unknown_structure"),
        ("/api/v1/dvh?names=A,Nope", StatusCode::NOT_FOUND, "unknown_structure"),
        ("/api/v1/dvh?pair=A,C", StatusCode::UNPROCESSABLE_ENTITY, "disjoint_pair"),
        ("/api/v1/slice?axis=axial&index=4", StatusCode::BAD_REQUEST, "slice_out_of_range"),
        ("/api/v1/records?ov_pct_of_ref=60,40", StatusCode::BAD_REQUEST, "invalid_filter"),
        ("/api/v1/records?colour=1,2", StatusCode::BAD_REQUEST, "invalid_filter"),
        ("/api/v1/point?x=9&y=0&z=0", StatusCode::BAD_REQUEST, "out_of_volume"),
        ("/api/v1/dvh?pair=A", StatusCode::BAD_REQUEST, "invalid_request"),
    ];
    for (uri, status, code) in cases {
        let (got, body) = get(&app, uri).await;
        assert_eq!(got, status, "{uri}: {body}");
        assert_eq!(body["error"], code, "{uri}");
    }
    // malformed query strings are rejected by the extractor
    let (status, _) = call(&app, "GET", "/api/v1/slice?axis=oblique&index=0", "").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn plan_summary_volumes_match_voxel_counts() {
    let spec = presets::spheres();
    let app = app_for("spheres");
    let (_, plan) = get(&app, "/api/v1/plan").await;
    let structures = plan["structures"].as_array().unwrap();
    assert_eq!(structures.len(), 3);
    let voxel_ml = spec.grid.spacing.iter().product::<f64>() / 1000.0;
    for (entry, shape) in structures.iter().zip(&spec.shapes) {
        let n = count(&common::rasterize(&spec.grid, &shape.shape));
        assert_eq!(entry["name"], shape.name.as_str());
        assert_eq!(entry["voxel_count"], n);
        assert!((entry["volume_ml"].as_f64().unwrap() - n as f64 * voxel_ml).abs() < 1e-9);
    }
    assert_eq!(plan["hi_convention"]["label"], "icru83");
}

#[tokio::test]
async fn disjoint_phantom_has_no_edges() {
    let app = app_for("disjoint");
    let (_, graph) = get(&app, "/api/v1/graph").await;
    assert!(graph["edges"].as_array().unwrap().is_empty());
    assert!(graph["nodes"].as_array().unwrap().iter().all(|n| n["degree"] == 0));
}

#[tokio::test]
async fn graph_percentages_equal_records() {
    let app = app_for("spheres");
    let (_, graph) = get(&app, "/api/v1/graph").await;
    for e in graph["edges"].as_array().unwrap() {
        let (a, b) = (e["a"].as_str().unwrap(), e["b"].as_str().unwrap());
        let (_, recs) = get(&app, &format!("/api/v1/records?reference={a}")).await;
        let rec = recs["records"].as_array().unwrap().iter().find(|r| r["other_name"] == b).unwrap().clone();
        assert_eq!(e["pct_of_a"], rec["ov_pct_of_ref"]);
        assert_eq!(e["pct_of_b"], rec["ov_pct_of_other"]);
        assert_eq!(e["d_mean"]["ov"], rec["ov_stats"]["d_mean"]);
        assert_eq!(e["d_mean"]["a"], rec["ref_stats"]["d_mean"]);
        assert_eq!(e["d_mean"]["b"], rec["other_stats"]["d_mean"]);
    }
}

#[tokio::test]
async fn filters_are_conjunctive_idempotent_and_reference_restricts() {
    let app = app_for("spheres");
    let (_, all) = get(&app, "/api/v1/records").await;
    let all = all["records"].as_array().unwrap().clone();
    assert_eq!(all.len(), 6);
    let uri = "/api/v1/records?ov_pct_of_ref=20,&ov_d_mean=40,";
    let (_, once) = get(&app, uri).await;
    let (_, twice) = get(&app, &format!("{uri}&ov_pct_of_ref=20,")).await;
    assert_eq!(once["records"], twice["records"]);
    let expect: Vec<&Value> = all
        .iter()
        .filter(|r| r["ov_pct_of_ref"].as_f64().unwrap() >= 20.0 && r["ov_stats"]["d_mean"].as_f64().unwrap() >= 40.0)
        .collect();
    assert_eq!(once["records"].as_array().unwrap().iter().collect::<Vec<_>>(), expect);

    for name in ["PTV", "Bladder", "Rectum"] {
        let (_, with_ref) = get(&app, &format!("/api/v1/records?reference={name}")).await;
        let restricted: Vec<&Value> = all.iter().filter(|r| r["ref_name"] == name).collect();
        assert_eq!(with_ref["records"].as_array().unwrap().iter().collect::<Vec<_>>(), restricted);
        assert_eq!(restricted.len(), 2);
    }
}

#[tokio::test]
async fn point_in_triple_overlap_gives_three_rows() {
    let app = app_for("spheres");
    let (_, body) = get(&app, "/api/v1/point?x=24&y=24&z=24").await;
    assert_eq!(body["members"], serde_json::json!(["PTV", "Bladder", "Rectum"]));
    assert_eq!(body["rows"].as_array().unwrap().len(), 3);
    let (_, empty) = get(&app, "/api/v1/point?x=0&y=0&z=0").await;
    assert!(empty["rows"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn slice_dose_is_a_pass_through() {
    let plan = generate_phantom(&presets::spheres()).unwrap();
    let raw = Raw::from_plan(&plan);
    let app = app_for("spheres");
    let (_, s) = get(&app, "/api/v1/slice?axis=coronal&index=11&dose=true").await;
    let [nx, ny, nz] = raw.dims;
    assert_eq!((s["width"].as_u64(), s["height"].as_u64()), (Some(nx as u64), Some(nz as u64)));
    let dose = s["dose"].as_array().unwrap();
    for z in 0..nz {
        for x in 0..nx {
            // f32 values travel as their shortest decimal form, which reads back bit-exact
            let want = raw.dose[x + nx * (11 + ny * z)] as f32;
            assert_eq!((dose[x + nx * z].as_f64().unwrap() as f32).to_bits(), want.to_bits());
        }
    }
    assert!(s["overlap"].is_null() && s["focus"].is_null());
}

#[tokio::test]
async fn dose_region_lifecycle() {
    let plan = generate_phantom(&presets::hotspot()).unwrap();
    let raw = Raw::from_plan(&plan);
    let app = app_for("hotspot");

    let (status, created) = post(&app, r#"{"d_pct": 105}"#).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["name"], "R_52.5Gy");
    assert_eq!(created["threshold_gy"], 52.5);
    assert_eq!(created["voxel_count"], count(&raw.at_least(52.5)));
    assert!(created["warning"].is_null());

    // edges go exactly to structures with V_d > 0
    let (_, graph) = get(&app, "/api/v1/graph").await;
    let neighbours: Vec<&str> = graph["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["b"] == "R_52.5Gy")
        .map(|e| e["a"].as_str().unwrap())
        .collect();
    let reached: Vec<&str> = plan
        .structures()
        .iter()
        .filter(|s| v_x(s, plan.dose(), 52.5).unwrap() > 0.0)
        .map(|s| s.name.as_str())
        .collect();
    assert_eq!(neighbours, reached);
    assert_eq!(created["edges"], reached.len());

    let (status, dup) = post(&app, r#"{"d_abs": 52.5}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(dup["error"], "region_exists");

    let (status, _) = post(&app, r#"{"d_abs": 1, "d_pct": 2}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, r#"{}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, r#"{"d_abs": -1}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, above) = post(&app, r#"{"d_abs": 1000}"#).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(above["edges"], 0);
    assert!(above["warning"].is_string());

    let (_, summary) = get(&app, "/api/v1/plan").await;
    let regions: Vec<&Value> = summary["dose_regions"].as_array().unwrap().iter().map(|r| &r["name"]).collect();
    assert_eq!(regions, ["R_52.5Gy", "R_1000Gy"]);
}

#[tokio::test]
async fn whole_grid_region_overlaps_everything() {
    let app = app_for("spheres");
    let (_, created) = post(&app, r#"{"d_abs": 0}"#).await;
    assert_eq!(created["voxel_count"], 24 * 24 * 24);
    let (_, recs) = get(&app, "/api/v1/records?reference=R_0Gy").await;
    let recs = recs["records"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r["ov_pct_of_other"] == 100.0));
}

#[tokio::test]
async fn half_peak_region_matches_brute_force() {
    let spec = presets::spheres();
    let peak = match spec.dose {
        rtoverlap::phantom::DoseModel::Gaussian { peak_gy, .. } => peak_gy,
        _ => unreachable!("spheres preset uses a gaussian"),
    };
    let raw = Raw::from_plan(&generate_phantom(&spec).unwrap());
    let app = app_for("spheres");
    let (_, created) = post(&app, &format!(r#"{{"d_abs": {}}}"#, peak / 2.0)).await;
    assert_eq!(created["voxel_count"], count(&raw.at_least(peak / 2.0)));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn readers_never_see_a_partial_graph() {
    let plan = generate_phantom(&presets::spheres()).unwrap();
    let state = AppState::new(PlanAnalysis::new(plan, AnalysisConfig::default()).unwrap());
    let app = router(Arc::clone(&state));

    let mut readers = Vec::new();
    for _ in 0..4 {
        let app = app.clone();
        readers.push(tokio::spawn(async move {
            for _ in 0..40 {
                let (_, g) = get(&app, "/api/v1/graph").await;
                let nodes: Vec<&str> = g["nodes"].as_array().unwrap().iter().map(|n| n["name"].as_str().unwrap()).collect();
                for e in g["edges"].as_array().unwrap() {
                    assert!(nodes.contains(&e["a"].as_str().unwrap()) && nodes.contains(&e["b"].as_str().unwrap()));
                }
                // a node's degree always agrees with the edge list of the same snapshot
                for n in g["nodes"].as_array().unwrap() {
                    let name = &n["name"];
                    let deg = g["edges"].as_array().unwrap().iter().filter(|e| &e["a"] == name || &e["b"] == name).count();
                    assert_eq!(n["degree"], deg);
                }
            }
        }));
    }
    let mut writers = Vec::new();
    for d in [10, 20, 30, 40, 50, 60] {
        let app = app.clone();
        writers.push(tokio::spawn(async move { post(&app, &format!(r#"{{"d_abs": {d}}}"#)).await.0 }));
    }
    for w in writers {
        assert_eq!(w.await.unwrap(), StatusCode::CREATED);
    }
    for r in readers {
        r.await.unwrap();
    }
    let (_, g) = get(&app, "/api/v1/graph").await;
    assert_eq!(g["nodes"].as_array().unwrap().len(), 9);
}
