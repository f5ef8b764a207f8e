use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use image::{GenericImageView, RgbImage};
use roadplane_cli::service::{router, AppState};
use roadplane_core::calibration::{build_profile, ProfileDocument};
use roadplane_core::synth::{fitted_profile, render_background, SyntheticScene};
use serde_json::{json, Value};
use tower::ServiceExt;

fn document() -> ProfileDocument {
    fitted_profile(&SyntheticScene::single_car()).unwrap().to_document()
}

fn small_frame() -> RgbImage {
    let mut scene = SyntheticScene::single_car();
    // same view at a tenth of the size keeps the test quick
    scene.camera.image_size = [192, 108];
    scene.camera.principal_point = [96.0, 54.0];
    scene.camera.focal_px = 140.0;
    render_background(&scene)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn health_and_calibration_round_trip() {
    let app = router(AppState::new(document(), None));
    let (s, b) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json_of(&b)["status"], "ok");

    let (s, b) = call(&app, Method::GET, "/calibration", None).await;
    assert_eq!(s, StatusCode::OK);
    let got: ProfileDocument = serde_json::from_slice(&b).unwrap();
    assert_eq!(got, document());
}

#[tokio::test]
async fn four_exact_points_fit_to_zero_residual() {
    let mut doc = document();
    doc.points.retain(|p| p.active);
    doc.homography = None;
    assert_eq!(doc.points.len(), 4);
    let app = router(AppState::new(document(), None));
    let (s, _) = call(&app, Method::PUT, "/calibration", Some(serde_json::to_value(&doc).unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    let (s, b) = call(&app, Method::POST, "/fit", None).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    let fit = json_of(&b);
    assert!(fit["rms_active_m"].as_f64().unwrap() < 1e-9);
    assert!(fit["rms_active_px"].as_f64().unwrap() < 1e-9);
}

#[tokio::test]
async fn fit_matches_the_batch_path_exactly() {
    let doc = document();
    let batch = build_profile(doc.correspondences(), doc.extent, doc.reference_frame.clone()).unwrap();
    let app = router(AppState::new(doc, None));
    let (s, b) = call(&app, Method::POST, "/fit", Some(json!({}))).await;
    assert_eq!(s, StatusCode::OK);
    let h: Vec<f64> = serde_json::from_value(json_of(&b)["homography"].clone()).unwrap();
    let expected = batch.homography().to_row_array();
    for (a, e) in h.iter().zip(expected) {
        assert_eq!(a.to_bits(), e.to_bits());
    }
    // the fitted matrix is stored with the document
    let (_, b) = call(&app, Method::GET, "/calibration", None).await;
    let stored: ProfileDocument = serde_json::from_slice(&b).unwrap();
    assert_eq!(stored.homography, Some(expected));
}

#[tokio::test]
async fn failed_fit_keeps_the_stored_profile() {
    let doc = document();
    let app = router(AppState::new(doc.clone(), None));
    let three: Vec<_> = doc.points.iter().filter(|p| p.active).take(3).cloned().collect();
    let (s, b) = call(&app, Method::POST, "/fit", Some(json!({ "points": three }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let err = json_of(&b);
    assert_eq!(err["code"], "TooFewPoints");
    assert_eq!(err["stage"], "calibration");
    assert!(err["message"].is_string());

    let (_, b) = call(&app, Method::GET, "/calibration", None).await;
    let stored: ProfileDocument = serde_json::from_slice(&b).unwrap();
    assert_eq!(stored, doc);
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let app = router(AppState::new(document(), None));
    let (s, b) = call(&app, Method::POST, "/fit", Some(json!({ "pts": [] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(json_of(&b)["code"], "bad_request");
    let (s, _) = call(&app, Method::PUT, "/calibration", Some(json!({ "version": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::POST, "/grid", Some(json!({ "spacing": -1.0 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn grid_lines_cover_the_extent() {
    let doc = document();
    let app = router(AppState::new(doc.clone(), None));
    let (s, b) = call(&app, Method::POST, "/grid", Some(json!({ "spacing": 5.0 }))).await;
    assert_eq!(s, StatusCode::OK);
    let g = json_of(&b);
    let lines = g["lines"].as_array().unwrap();
    let values = |axis: &str| -> Vec<f64> {
        lines
            .iter()
            .filter(|l| l["axis"] == axis)
            .map(|l| l["value"].as_f64().unwrap())
            .collect()
    };
    // every multiple of 5 m inside the extent, both ends included
    let e = doc.extent;
    let multiples = |lo: f64, hi: f64| (0..).map(|k| k as f64 * 5.0).skip_while(|v| *v < lo).take_while(|v| *v <= hi).count();
    let (xs, ys) = (values("x"), values("y"));
    assert_eq!(xs.len(), multiples(e.x_min, e.x_max), "{xs:?}");
    assert_eq!(ys.len(), multiples(e.y_min, e.y_max), "{ys:?}");
    for l in lines {
        assert!(!l["polylines"].as_array().unwrap().is_empty());
    }
    assert_eq!(g["dropped_samples"], 0);
}

#[tokio::test]
async fn previews_need_a_frame() {
    let app = router(AppState::new(document(), None));
    let (s, b) = call(&app, Method::GET, "/frame", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(json_of(&b)["code"], "missing_frame");
    let (s, _) = call(&app, Method::POST, "/bev-preview", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bev_preview_and_frame_are_png() {
    let mut doc = document();
    // profile for the reduced frame: every pixel coordinate scales by 0.1
    for p in &mut doc.points {
        p.image = [p.image[0] * 0.1, p.image[1] * 0.1];
    }
    doc.homography = None;
    let app = router(AppState::new(doc, Some(small_frame())));
    let (s, b) = call(&app, Method::GET, "/frame", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(image::load_from_memory(&b).unwrap().dimensions(), (192, 108));

    let (s, b) = call(&app, Method::POST, "/bev-preview", Some(json!({ "resolution_ppm": 2.0 }))).await;
    assert_eq!(s, StatusCode::OK);
    let img = image::load_from_memory(&b).unwrap();
    assert_eq!(img.dimensions(), (48, 180));
}

#[tokio::test]
async fn sensitivity_grows_away_from_the_camera() {
    let app = router(AppState::new(document(), None));
    let (s, b) = call(&app, Method::POST, "/sensitivity", Some(json!({ "perturb_px": 2.0, "spacing_m": 5.0 }))).await;
    assert_eq!(s, StatusCode::OK);
    let field = json_of(&b);
    let at = |x: f64, y: f64| {
        field["sites"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["ground"]["x"] == x && s["ground"]["y"] == y)
            .and_then(|s| s["displacement_m"].as_f64())
            .unwrap()
    };
    assert!(at(10.0, 85.0) > at(10.0, 5.0));
    let (s, _) = call(&app, Method::POST, "/sensitivity", Some(json!({ "perturb_px": 0.0, "spacing_m": 5.0 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}
