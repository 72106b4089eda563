#![allow(dead_code)]

use std::io::Cursor;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use image::GrayImage;
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "XhieroscribeX";

pub fn png_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
    out
}

pub fn multipart_body(image: &[u8], metadata: &str) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"page.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    b.extend_from_slice(image);
    b.extend_from_slice(
        format!("\r\n--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"metadata\"\r\n\r\n{metadata}\r\n--{BOUNDARY}--\r\n")
            .as_bytes(),
    );
    b
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    /// Checks the `{error, detail}` envelope and returns the body.
    pub fn error(&self, status: StatusCode) -> Value {
        assert_eq!(self.status, status, "body: {}", String::from_utf8_lossy(&self.body));
        let v = self.json();
        assert!(v["error"].is_string() && v["detail"].is_string(), "bad error envelope: {v}");
        v
    }
}

pub async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None, Vec::new()).await
}

pub async fn post_json(app: &Router, uri: &str, v: &Value) -> Reply {
    send(app, Method::POST, uri, Some("application/json"), serde_json::to_vec(v).unwrap()).await
}

pub async fn upload(app: &Router, image: &[u8], metadata: &str) -> Reply {
    send(
        app,
        Method::POST,
        "/sessions",
        Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
        multipart_body(image, metadata),
    )
    .await
}
