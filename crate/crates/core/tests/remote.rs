//! Remote clients against in-process HTTP servers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use nalgebra::Vector3;
use ric_core::depth::{encode_maps, NormalBoundaryMaps, NormalPredictor, RemoteNormalPredictor};
use ric_core::inpaint::{
    inpaint_with_retry, CachedBackend, Captioner, InpaintBackend, InpaintRequest, Prompt,
    RemoteBackend, RemoteBackendConfig, RemoteCaptioner, RetryPolicy, WireFormat,
};
use ric_core::net::{b64_decode, b64_encode, decode_png_rgb, encode_png_rgb, HttpSettings};
use ric_core::{CameraIntrinsics, ColorImage, Error, Grid};
use serde_json::Value;

struct Received {
    url: String,
    auth: Option<String>,
    content_type: String,
    body: Vec<u8>,
}

/// Serves requests on a background thread for the rest of the test process.
fn serve(
    handler: impl Fn(&Received) -> (u16, String) + Send + 'static,
) -> (String, Arc<tiny_http::Server>, Arc<AtomicUsize>) {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let addr = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let (s, h) = (server.clone(), hits.clone());
    thread::spawn(move || {
        for mut req in s.incoming_requests() {
            h.fetch_add(1, Ordering::SeqCst);
            let header = |name: &str| {
                req.headers()
                    .iter()
                    .find(|hd| hd.field.as_str().as_str().eq_ignore_ascii_case(name))
                    .map(|hd| hd.value.as_str().to_string())
            };
            let auth = header("Authorization");
            let content_type = header("Content-Type").unwrap_or_default();
            let mut body = Vec::new();
            req.as_reader().read_to_end(&mut body).unwrap();
            let received = Received {
                url: req.url().to_string(),
                auth,
                content_type,
                body,
            };
            let (status, text) = handler(&received);
            let resp = tiny_http::Response::from_string(text)
                .with_status_code(status)
                .with_header(
                    "Content-Type: application/json"
                        .parse::<tiny_http::Header>()
                        .unwrap(),
                );
            let _ = req.respond(resp);
        }
    });
    (addr, server, hits)
}

fn settings() -> HttpSettings {
    HttpSettings {
        timeout_secs: 10.0,
        max_in_flight: 2,
        requests_per_second: 1000.0,
        burst: 100,
    }
}

fn request() -> InpaintRequest {
    let image = Grid::from_fn(12, 8, |x, y| [(x * 20) as u8, (y * 30) as u8, 99]);
    let mask = Grid::from_fn(12, 8, |x, _| x >= 6);
    InpaintRequest::new(
        image,
        mask,
        Prompt::new("A photo of a mug").unwrap(),
        Some(42),
    )
    .unwrap()
    .with_view(3)
}

fn solid(w: u32, h: u32, c: [u8; 3]) -> String {
    b64_encode(&encode_png_rgb(&Grid::filled(w as usize, h as usize, c)).unwrap())
}

fn no_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 1,
        base_delay: std::time::Duration::ZERO,
    }
}

fn check_composite(req: &InpaintRequest, out: &ColorImage, fill: [u8; 3]) {
    for y in 0..req.image.height() {
        for x in 0..req.image.width() {
            let expected = if *req.mask.get(x, y) {
                fill
            } else {
                *req.image.get(x, y)
            };
            assert_eq!(*out.get(x, y), expected, "pixel ({x},{y})");
        }
    }
}

#[test]
fn generic_wire_format() {
    let (addr, _server, hits) = serve(|r| {
        let v: Value = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(v["prompt"], "A photo of a mug");
        assert_eq!(v["seed"], 42);
        assert_eq!(r.auth.as_deref(), Some("Bearer secret"));
        let img = decode_png_rgb(&b64_decode(v["image"].as_str().unwrap()).unwrap()).unwrap();
        let mask = image::load_from_memory(&b64_decode(v["mask"].as_str().unwrap()).unwrap())
            .unwrap()
            .to_luma8();
        assert_eq!(img.dims(), (12, 8));
        // 255 marks pixels to inpaint.
        assert_eq!(mask.get_pixel(6, 0).0[0], 255);
        assert_eq!(mask.get_pixel(5, 0).0[0], 0);
        (
            200,
            serde_json::json!({ "image": solid(12, 8, [1, 2, 3]) }).to_string(),
        )
    });
    let backend = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: format!("{addr}/inpaint"),
            format: WireFormat::Generic,
            http: settings(),
            ..Default::default()
        },
        Some("secret".into()),
    )
    .unwrap();
    let req = request();
    let out = inpaint_with_retry(&req, &backend, &no_retry()).unwrap();
    check_composite(&req, &out, [1, 2, 3]);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn webui_wire_format_letterboxes() {
    let (addr, _server, _) = serve(|r| {
        assert!(r.url.ends_with("/sdapi/v1/img2img"));
        let v: Value = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(v["width"], 64);
        let init =
            decode_png_rgb(&b64_decode(v["init_images"][0].as_str().unwrap()).unwrap()).unwrap();
        assert_eq!(init.dims(), (64, 64));
        (
            200,
            serde_json::json!({ "images": [solid(64, 64, [7, 8, 9])] }).to_string(),
        )
    });
    let backend = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: format!("{addr}/sdapi/v1/img2img"),
            format: WireFormat::StableDiffusionWebui,
            square_size: 64,
            http: settings(),
        },
        None,
    )
    .unwrap();
    let req = request();
    let out = inpaint_with_retry(&req, &backend, &no_retry()).unwrap();
    check_composite(&req, &out, [7, 8, 9]);
}

#[test]
fn openai_edits_wire_format_uses_multipart() {
    let (addr, _server, _) = serve(|r| {
        assert!(r.content_type.starts_with("multipart/form-data"));
        let text = String::from_utf8_lossy(&r.body);
        assert!(text.contains("name=\"prompt\""));
        assert!(text.contains("64x64"));
        assert!(text.contains("b64_json"));
        (
            200,
            serde_json::json!({ "data": [{ "b64_json": solid(64, 64, [4, 5, 6]) }] }).to_string(),
        )
    });
    let backend = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: format!("{addr}/v1/images/edits"),
            format: WireFormat::OpenaiEdits,
            square_size: 64,
            http: settings(),
        },
        Some("k".into()),
    )
    .unwrap();
    let req = request();
    let out = inpaint_with_retry(&req, &backend, &no_retry()).unwrap();
    check_composite(&req, &out, [4, 5, 6]);
}

#[test]
fn server_errors_become_backend_failures() {
    let (addr, _server, hits) = serve(|_| (503, "{\"error\": \"busy\"}".into()));
    let backend = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: addr,
            http: settings(),
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let policy = RetryPolicy {
        attempts: 3,
        base_delay: std::time::Duration::from_millis(1),
    };
    let err = inpaint_with_retry(&request(), &backend, &policy).unwrap_err();
    assert!(
        matches!(err, Error::BackendFailed { view: Some(3), .. }),
        "{err}"
    );
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn wrong_response_size_is_rejected() {
    let (addr, _server, _) = serve(|_| {
        (
            200,
            serde_json::json!({ "image": solid(5, 5, [0, 0, 0]) }).to_string(),
        )
    });
    let backend = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: addr,
            http: settings(),
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert!(inpaint_with_retry(&request(), &backend, &no_retry()).is_err());
}

#[test]
fn cache_serves_reruns_without_requests() {
    let (addr, _server, hits) = serve(|_| {
        (
            200,
            serde_json::json!({ "image": solid(12, 8, [1, 1, 1]) }).to_string(),
        )
    });
    let dir = tempfile::tempdir().unwrap();
    let make = || {
        let remote = RemoteBackend::new(
            RemoteBackendConfig {
                endpoint: addr.clone(),
                http: settings(),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        CachedBackend::new(remote, dir.path())
    };
    let req = request();
    let first = inpaint_with_retry(&req, &make(), &no_retry()).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let second_backend = make();
    let second = inpaint_with_retry(&req, &second_backend, &no_retry()).unwrap();
    assert_eq!(first, second);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert_eq!(second_backend.backend_requests(), 0);
}

#[test]
fn remote_normal_predictor_round_trip() {
    let (w, h) = (6, 4);
    let maps = NormalBoundaryMaps::new(
        Grid::filled(w, h, Vector3::new(0.0, -0.6, -0.8)),
        Grid::from_fn(w, h, |x, _| if x == 0 { 1.0 } else { 0.0 }),
    )
    .unwrap();
    let (nb, bb) = encode_maps(&maps);
    let (addr, _server, _) = serve(move |r| {
        let v: Value = serde_json::from_slice(&r.body).unwrap();
        assert!(v["image"].is_string());
        (
            200,
            serde_json::json!({ "normals": nb, "boundary": bb }).to_string(),
        )
    });
    let p = RemoteNormalPredictor::new(addr, None, &settings()).unwrap();
    let k = CameraIntrinsics::new(5.0, 5.0, 2.5, 1.5, w, h).unwrap();
    let out = p
        .predict(&Grid::filled(w, h, [0, 0, 0]), &Grid::filled(w, h, 1.0), &k)
        .unwrap();
    assert_eq!(out.dims(), (w, h));
    assert!((out.normals.get(3, 2) - Vector3::new(0.0, -0.6, -0.8)).norm() < 1e-6);
    assert_eq!(*out.boundary.get(0, 0), 1.0);
    assert_eq!(*out.boundary.get(1, 0), 0.0);
}

#[test]
fn remote_normal_predictor_rejects_wrong_size() {
    let maps = NormalBoundaryMaps::new(
        Grid::filled(2, 2, Vector3::new(0.0, 0.0, -1.0)),
        Grid::filled(2, 2, 0.0),
    )
    .unwrap();
    let (nb, bb) = encode_maps(&maps);
    let (addr, _server, _) = serve(move |_| {
        (
            200,
            serde_json::json!({ "normals": nb, "boundary": bb }).to_string(),
        )
    });
    let p = RemoteNormalPredictor::new(addr, None, &settings()).unwrap();
    let k = CameraIntrinsics::new(5.0, 5.0, 2.5, 1.5, 6, 4).unwrap();
    let err = p
        .predict(&Grid::filled(6, 4, [0, 0, 0]), &Grid::filled(6, 4, 1.0), &k)
        .unwrap_err();
    assert!(matches!(err, Error::PredictorShapeMismatch(_)));
}

#[test]
fn remote_captioner() {
    let (addr, _server, _) = serve(|r| {
        let v: Value = serde_json::from_slice(&r.body).unwrap();
        assert!(v["image"].is_string());
        (200, "{\"caption\": \"a red box on a table\"}".into())
    });
    let c = RemoteCaptioner::new(addr, None, &settings()).unwrap();
    let img = Grid::filled(4, 4, [0, 0, 0]);
    assert_eq!(c.caption(&img).unwrap(), "a red box on a table");
    let prompt = ric_core::inpaint::make_prompt(&img, Some(&c));
    assert_eq!(prompt.as_str(), "A photo of a red box on a table");
}

#[test]
fn backend_id_distinguishes_endpoints() {
    let a = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: "http://a".into(),
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let b = RemoteBackend::new(
        RemoteBackendConfig {
            endpoint: "http://b".into(),
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert_ne!(a.id(), b.id());
}
