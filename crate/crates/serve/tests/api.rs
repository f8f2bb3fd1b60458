use std::io::Cursor;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use base64::Engine as _;
use gutcheck_core::classifier::{Architecture, Classifier};
use gutcheck_core::synth::{planted_image, PlantedConfig};
use gutcheck_core::{ClassSet, LabelClass, Pixels};
use gutcheck_serve::*;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn model(classes: ClassSet, seed: u64) -> Classifier {
    Classifier::from_layers(Architecture::desk().layers(classes.len()).unwrap(), classes, seed)
}

fn png(p: &Pixels) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    p.to_rgb8().write_to(&mut buf, image::ImageFormat::Png).unwrap();
    buf.into_inner()
}

fn exported(classes: ClassSet, seed: u64) -> (tempfile::TempDir, LoadedModel) {
    let dir = tempfile::tempdir().unwrap();
    export_model(&model(classes, seed), serde_json::json!({"fold": 0}), dir.path()).unwrap();
    let loaded = load_model(dir.path()).unwrap();
    (dir, loaded)
}

#[test]
fn export_round_trip_is_bit_exact() {
    let m = model(ClassSet::three(), 1);
    let dir = tempfile::tempdir().unwrap();
    let meta = export_model(&m, serde_json::Value::Null, dir.path()).unwrap();
    assert_eq!(meta.version, m.fingerprint());
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back.meta, meta);
    let probes: Vec<Pixels> = (0..10)
        .map(|i| planted_image(LabelClass::ALL[i % 3], i as u64, &PlantedConfig::default()))
        .collect();
    let refs: Vec<&Pixels> = probes.iter().collect();
    let a = m.logits(&refs);
    let b = back.model.logits(&refs);
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn corrupted_weights_are_refused() {
    let (dir, _) = exported(ClassSet::three(), 2);
    let path = dir.path().join("weights.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_model(dir.path()), Err(ServeError::Checksum { .. })));
    assert!(AppState::from_dir(dir.path().to_path_buf()).is_err());
}

#[test]
fn class_order_drives_probability_keys() {
    let white = png(&Pixels::filled(128, 128, [255.0; 3]));
    for classes in [ClassSet::three(), ClassSet::two()] {
        let (_dir, m) = exported(classes.clone(), 3);
        let d = classify(&m, &white, false).unwrap();
        let keys: Vec<LabelClass> = d.probabilities.keys().copied().collect();
        assert_eq!(keys, classes.classes());
        let sum: f64 = d.probabilities.values().sum();
        assert!((sum - 1.0).abs() <= 1e-6);
        let best = d.probabilities.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(*best.0, d.label);
        assert_eq!(d.advisory.is_some(), d.label == LabelClass::Abnormal);
        let json = serde_json::to_string(&d).unwrap();
        let order: Vec<usize> = classes.classes().iter().map(|c| json.find(&format!("\"{c}\":")).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn classification_is_stateless() {
    let (_dir, m) = exported(ClassSet::three(), 4);
    let img = png(&planted_image(LabelClass::Normal, 1, &PlantedConfig::default()));
    let a = classify(&m, &img, true).unwrap();
    let b = classify(&m, &img, true).unwrap();
    assert_eq!(a.probabilities, b.probabilities);
    assert_eq!(a.heatmap_png_b64, b.heatmap_png_b64);
    let heat = base64::engine::general_purpose::STANDARD.decode(a.heatmap_png_b64.unwrap()).unwrap();
    let decoded = image::load_from_memory(&heat).unwrap();
    assert_eq!((decoded.width(), decoded.height()), (128, 128));
}

#[test]
fn rejects_bad_uploads() {
    let (_dir, m) = exported(ClassSet::three(), 5);
    assert!(matches!(classify(&m, b"definitely not an image", false), Err(ServeError::Undecodable(_))));
    let big = vec![0u8; MAX_IMAGE_BYTES + 1];
    assert!(matches!(classify(&m, &big, false), Err(ServeError::TooLarge { .. })));
}

const BOUNDARY: &str = "gutcheckboundary";

fn multipart(field: &str, bytes: &[u8]) -> Vec<u8> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"x.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    body
}

fn classify_request(uri: &str, body: Vec<u8>) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::from(body))
        .unwrap()
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, serde_json::Value) {
    let resp = router(state.clone(), None).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = if bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {}", String::from_utf8_lossy(&bytes)))
    };
    (status, headers, json)
}

fn validator(def: &str) -> jsonschema::Validator {
    let mut schema: serde_json::Value = serde_json::from_str(API_SCHEMA).unwrap();
    schema["$ref"] = serde_json::json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(def: &str, v: &serde_json::Value) {
    let val = validator(def);
    let errors: Vec<String> = val.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?} in {v}");
}

#[tokio::test]
async fn http_api_contract() {
    let (dir, m) = exported(ClassSet::three(), 6);
    let version = m.meta.version.clone();
    let state = AppState::new(Some(m), Some(dir.path().to_path_buf()));

    let (s, _, j) = call(&state, Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(j["status"], "ok");
    assert_eq!(j["model_version"], version.as_str());
    assert_valid("health", &j);

    let img = png(&planted_image(LabelClass::Abnormal, 3, &PlantedConfig::default()));
    let (s, h, j) = call(&state, classify_request("/api/classify", multipart("image", &img))).await;
    assert_eq!(s, StatusCode::OK, "{j}");
    assert_eq!(h.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(), "*");
    assert_valid("diagnosis", &j);
    assert!(j.get("heatmap_png_b64").is_none());
    let keys: Vec<&String> = j["probabilities"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["abnormal", "no_stool", "normal"]);

    let (s, _, j) = call(&state, classify_request("/api/classify?explain=1", multipart("image", &img))).await;
    assert_eq!(s, StatusCode::OK);
    assert_valid("diagnosis", &j);
    assert!(j["heatmap_png_b64"].as_str().unwrap().len() > 100);

    let (s, _, j) = call(&state, classify_request("/api/classify", multipart("image", b"garbage"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(j["error"], "undecodable_image");
    assert_valid("error", &j);

    let (s, _, j) = call(&state, classify_request("/api/classify", multipart("photo", &img))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_valid("error", &j);

    let big = vec![7u8; MAX_IMAGE_BYTES + 10];
    let (s, _, j) = call(&state, classify_request("/api/classify", multipart("image", &big))).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(j["error"], "too_large");
    assert_valid("error", &j);

    let preflight = Request::builder()
        .method("OPTIONS")
        .uri("/api/classify")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let (s, h, _) = call(&state, preflight).await;
    assert!(s.is_success());
    assert!(h.get(header::ACCESS_CONTROL_ALLOW_METHODS).is_some());

    state.replace(None);
    let (s, _, j) = call(&state, Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_valid("health", &j);
    let (s, _, j) = call(&state, classify_request("/api/classify", multipart("image", &img))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(j["error"], "no_model");
}

#[cfg(unix)]
#[test]
fn reload_follows_an_atomically_swapped_symlink() {
    let root = tempfile::tempdir().unwrap();
    let (v1, v2) = (root.path().join("v1"), root.path().join("v2"));
    let first = export_model(&model(ClassSet::three(), 7), serde_json::Value::Null, &v1).unwrap();
    let second = export_model(&model(ClassSet::three(), 8), serde_json::Value::Null, &v2).unwrap();
    assert_ne!(first.version, second.version);
    let live = root.path().join("current");
    std::os::unix::fs::symlink(&v1, &live).unwrap();
    let state = AppState::from_dir(live.clone()).unwrap();
    let held = state.current().unwrap();

    let tmp = root.path().join("current.tmp");
    std::os::unix::fs::symlink(&v2, &tmp).unwrap();
    std::fs::rename(&tmp, &live).unwrap();
    assert_eq!(state.reload().unwrap(), second.version);
    // a request that grabbed the old model keeps a consistent view
    assert_eq!(held.meta.version, first.version);

    std::fs::write(v2.join("weights.bin"), b"truncated").unwrap();
    assert!(state.reload().is_err());
    assert_eq!(state.current().unwrap().meta.version, second.version);
}
