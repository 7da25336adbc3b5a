mod common;

use std::sync::{Arc, Mutex};

use cruda::golden;
use cruda::sim_server::{endpoint_table, router, ENDPOINTS};
use cruda_core::schema::builtin_registry;
use cruda_core::sim::CrmSim;
use serde_json::{json, Value};

fn start() -> (String, reqwest::blocking::Client) {
    let sim = CrmSim::from_fixture(builtin_registry(), golden::seed_fixture()).unwrap();
    let addr = common::spawn(router(Arc::new(Mutex::new(sim))));
    (format!("http://{addr}"), reqwest::blocking::Client::new())
}

#[test]
fn crud_round_trip_over_http() {
    let (base, c) = start();
    let r = c.get(format!("{base}/objects/contact/51")).send().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let body: Value = r.json().unwrap();
    assert_eq!(body["properties"]["firstname"], "Gary");

    let r = c
        .post(format!("{base}/objects/contact"))
        .json(&json!({"properties": {"firstname": "Zed", "lastname": "Quill", "email": "zed@example.com"}}))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 201);
    let id = r.json::<Value>().unwrap()["id"].to_string().trim_matches('"').to_string();

    let r = c
        .patch(format!("{base}/objects/contact/{id}"))
        .json(&json!({"properties": {"phone": "555-0100"}}))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);

    let r = c
        .post(format!("{base}/objects/contact/search"))
        .json(&json!({"filterGroups": [{"filters": [{"propertyName": "firstname", "operator": "EQ", "value": "Zed"}]}]}))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert_eq!(r.json::<Value>().unwrap()["total"], 1);

    let r = c.put(format!("{base}/associations/contact/{id}/deal/15810400147")).send().unwrap();
    assert!(r.status().is_success(), "{}", r.status());
    let r = c.put(format!("{base}/associations/contact/{id}/deal/15810400147")).send().unwrap();
    assert_eq!(r.status().as_u16(), 409);
    let r = c.get(format!("{base}/associations/contact/{id}/deal")).send().unwrap();
    assert!(r.text().unwrap().contains("15810400147"));

    assert_eq!(c.delete(format!("{base}/objects/contact/{id}")).send().unwrap().status().as_u16(), 204);
    assert_eq!(c.delete(format!("{base}/objects/contact/{id}")).send().unwrap().status().as_u16(), 204);
    assert_eq!(c.get(format!("{base}/objects/contact/999999")).send().unwrap().status().as_u16(), 404);
}

#[test]
fn reset_restores_the_seed() {
    let (base, c) = start();
    let before: Value = c.get(format!("{base}/_sim/snapshot")).send().unwrap().json().unwrap();
    c.delete(format!("{base}/objects/contact/51")).send().unwrap();
    let during: Value = c.get(format!("{base}/_sim/snapshot")).send().unwrap().json().unwrap();
    assert_ne!(before, during);
    assert_eq!(c.post(format!("{base}/_sim/reset")).send().unwrap().status().as_u16(), 204);
    let after: Value = c.get(format!("{base}/_sim/snapshot")).send().unwrap().json().unwrap();
    assert_eq!(before, after);
}

#[test]
fn malformed_bodies_are_client_errors() {
    let (base, c) = start();
    let r = c
        .post(format!("{base}/objects/contact"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let r = c.post(format!("{base}/objects/contact")).json(&json!({"properties": {"nosuch": 1}})).send().unwrap();
    assert!(r.status().is_client_error());
}

#[test]
fn endpoint_table_lists_every_route() {
    let t = endpoint_table("http://h");
    assert_eq!(t.lines().count(), ENDPOINTS.len());
    for (m, p, _) in ENDPOINTS {
        assert!(t.contains(m) && t.contains(&format!("http://h{p}")));
    }
}
