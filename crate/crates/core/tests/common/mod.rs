#![allow(dead_code)]

use cruda_core::backend::{ScriptLine, ScriptedBackend};
use cruda_core::dataset::QueryRecord;
use cruda_core::schema::{builtin_registry, Category, ObjectType};
use cruda_core::sim::{AssociationRecord, CrmObject, CrmSim, Fixture, ObjectRef};
use serde_json::{json, Value};

pub fn obj(id: u64, t: ObjectType, props: Value) -> CrmObject {
    CrmObject {
        id,
        object_type: t,
        properties: serde_json::from_value(props).unwrap(),
        created_at: "2024-05-01T00:00:00.000Z".into(),
        updated_at: "2024-05-01T00:00:00.000Z".into(),
        archived: false,
    }
}

pub fn seed() -> Fixture {
    let deal_note = |n| AssociationRecord {
        from: ObjectRef { object_type: ObjectType::Deal, id: 15860461964 },
        to: ObjectRef { object_type: ObjectType::Note, id: n },
    };
    Fixture {
        now: None,
        objects: vec![
            obj(51, ObjectType::Contact, json!({"firstname": "Gary", "lastname": "Stone", "email": "gary@example.com"})),
            obj(201, ObjectType::Company, json!({"name": "Lakka Tech Solutions", "domain": "lakka.tech"})),
            obj(301, ObjectType::Note, json!({"hs_note_body": "Kickoff went well", "hs_timestamp": "2024-05-01T00:00:00.000Z"})),
            obj(302, ObjectType::Note, json!({"hs_note_body": "Sent pricing", "hs_timestamp": "2024-05-02T00:00:00.000Z"})),
            obj(15810400147, ObjectType::Deal, json!({"dealname": "New Deal", "amount": 1000})),
            obj(15860461964, ObjectType::Deal, json!({"dealname": "Renewal", "amount": 2500})),
        ],
        associations: vec![deal_note(301), deal_note(302)],
    }
}

pub fn sim() -> CrmSim {
    CrmSim::from_fixture(builtin_registry(), seed()).unwrap()
}

pub fn query(id: &str, text: &str, category: Category) -> QueryRecord {
    QueryRecord {
        id: id.into(),
        text: text.into(),
        category,
        n_calls: 1,
        gold_functions: vec![],
        gold_calls: vec![],
        fixture: "seed.json".into(),
    }
}

pub fn line(q: &str, stage: &str, attempt: u32, response: &str) -> ScriptLine {
    ScriptLine {
        query_id: q.into(),
        stage: stage.into(),
        attempt,
        repeat: None,
        response: response.into(),
        latency_s: 1.0,
        input_tokens: None,
        output_tokens: None,
    }
}

pub fn script(model: &str, lines: Vec<ScriptLine>) -> ScriptedBackend {
    ScriptedBackend::from_lines(model, lines).unwrap()
}
