use cruda_core::schema::{builtin_registry, ApiCall, HttpMethod, ObjectType, Registry};
use cruda_core::sim::{AssociationRecord, CrmObject, CrmSim, Fixture, ObjectRef, MAX_FILTERS_MESSAGE};
use proptest::prelude::*;
use serde_json::{json, Value};

fn obj(id: u64, t: ObjectType, props: Value) -> CrmObject {
    CrmObject {
        id,
        object_type: t,
        properties: serde_json::from_value(props).unwrap(),
        created_at: "2024-05-01T00:00:00.000Z".into(),
        updated_at: "2024-05-01T00:00:00.000Z".into(),
        archived: false,
    }
}

fn r(t: ObjectType, id: u64) -> ObjectRef {
    ObjectRef { object_type: t, id }
}

fn seed() -> Fixture {
    Fixture {
        now: None,
        objects: vec![
            obj(51, ObjectType::Contact, json!({"firstname": "Gary", "lastname": "Stone"})),
            obj(52, ObjectType::Contact, json!({"firstname": "Ada", "lastname": "Byron"})),
            obj(201, ObjectType::Company, json!({"name": "Lakka Tech Solutions"})),
            obj(301, ObjectType::Note, json!({"hs_note_body": "Kickoff went well", "hs_timestamp": "2024-05-01T00:00:00.000Z"})),
            obj(302, ObjectType::Note, json!({"hs_note_body": "Sent pricing", "hs_timestamp": "2024-05-02T00:00:00.000Z"})),
            obj(15810400147, ObjectType::Deal, json!({"dealname": "New Deal", "amount": 1000})),
            obj(15810400148, ObjectType::Deal, json!({"dealname": "Old Deal", "amount": 500})),
            obj(15860461964, ObjectType::Deal, json!({"dealname": "Renewal", "amount": 2500})),
        ],
        associations: vec![
            AssociationRecord { from: r(ObjectType::Deal, 15860461964), to: r(ObjectType::Note, 301) },
            AssociationRecord { from: r(ObjectType::Deal, 15860461964), to: r(ObjectType::Note, 302) },
        ],
    }
}

fn sim() -> CrmSim {
    CrmSim::from_fixture(builtin_registry(), seed()).unwrap()
}

fn call(reg: &Registry, name: &str, input: Value) -> ApiCall {
    reg.build_call(name, &input).unwrap()
}

fn search(filters: Value) -> Value {
    json!({"filterGroups": [{"filters": filters}]})
}

#[test]
fn create_returns_fresh_id() {
    let mut s = sim();
    let reg = builtin_registry();
    let resp = s.execute(&call(&reg, "crm_v3_objects_contacts_create_post", json!({"properties": {"firstname": "Gary"}})));
    assert_eq!(resp.status, 201);
    assert_eq!(resp.body["id"], json!(15860461965u64));
    assert_eq!(resp.body["properties"]["firstname"], "Gary");
    let again = s.execute(&call(&reg, "crm_v3_objects_contacts_create_post", json!({"properties": {}})));
    assert_eq!(again.body["id"], json!(15860461966u64));
}

#[test]
fn delete_missing_company_is_404() {
    let mut s = sim();
    let reg = builtin_registry();
    let resp = s.execute(&call(&reg, "crm_v3_objects_companies_archive_delete", json!({"companyId": 999})));
    assert_eq!(resp.status, 404);
}

#[test]
fn delete_is_idempotent_on_archived() {
    let mut s = sim();
    let reg = builtin_registry();
    let del = call(&reg, "crm_v3_objects_companies_archive_delete", json!({"companyId": 201}));
    assert_eq!(s.execute(&del).status, 204);
    assert_eq!(s.execute(&del).status, 204);
    let get = call(&reg, "crm_v3_objects_companies_read_get", json!({"companyId": 201}));
    assert_eq!(s.execute(&get).status, 404);
}

#[test]
fn associating_twice_conflicts() {
    let mut s = sim();
    let reg = builtin_registry();
    let assoc = call(
        &reg,
        "crm_v3_objects_deals_associate_put",
        json!({"dealId": 15810400147u64, "toObjectType": "contact", "toObjectId": 51}),
    );
    assert_eq!(s.execute(&assoc).status, 201);
    assert_eq!(s.execute(&assoc).status, 409);
    // The pair is unordered.
    let reverse = call(
        &reg,
        "crm_v3_objects_contacts_associate_put",
        json!({"contactId": 51, "toObjectType": "deal", "toObjectId": 15810400147u64}),
    );
    assert_eq!(s.execute(&reverse).status, 409);
}

#[test]
fn four_filters_rejected_with_exact_message() {
    let mut s = sim();
    let reg = builtin_registry();
    let f = json!({"propertyName": "dealname", "operator": "EQ", "value": "x"});
    let c = call(&reg, "crm_v3_objects_deals_search_post", search(json!([f, f, f, f])));
    let resp = s.execute(&c);
    assert_eq!(resp.status, 400);
    assert_eq!(resp.body["message"], MAX_FILTERS_MESSAGE);
    let c = call(&reg, "crm_v3_objects_deals_search_post", search(json!([f, f, f])));
    assert_eq!(s.execute(&c).status, 200);
}

#[test]
fn search_by_name_skips_archived() {
    let mut s = sim();
    let reg = builtin_registry();
    let by_name = call(
        &reg,
        "crm_v3_objects_deals_search_post",
        search(json!([{"propertyName": "dealname", "operator": "EQ", "value": "new deal"}])),
    );
    let resp = s.execute(&by_name);
    assert_eq!(resp.status, 200);
    assert_eq!(resp.body["total"], 1);
    assert_eq!(resp.body["results"][0]["id"], json!(15810400147u64));
    s.execute(&call(&reg, "crm_v3_objects_deals_archive_delete", json!({"dealId": 15810400147u64})));
    assert_eq!(s.execute(&by_name).body["total"], 0);
}

#[test]
fn empty_store_search() {
    let mut s = CrmSim::new(builtin_registry());
    let reg = builtin_registry();
    let resp = s.execute(&call(&reg, "crm_v3_objects_contacts_search_post", json!({"filterGroups": []})));
    assert_eq!(resp.status, 200);
    assert_eq!(resp.body["total"], 0);
    assert_eq!(resp.body["results"], json!([]));
}

#[test]
fn operators_sorting_and_paging() {
    let mut s = sim();
    let reg = builtin_registry();
    let run = |s: &mut CrmSim, body: Value| s.execute(&call(&reg, "crm_v3_objects_deals_search_post", body)).body;
    let ids = |b: &Value| -> Vec<u64> { b["results"].as_array().unwrap().iter().map(|r| r["id"].as_u64().unwrap()).collect() };
    let b = run(&mut s, search(json!([{"propertyName": "amount", "operator": "GT", "value": "900"}])));
    assert_eq!(ids(&b), [15810400147, 15860461964]);
    let b = run(&mut s, search(json!([{"propertyName": "dealname", "operator": "CONTAINS", "value": "DEAL"}])));
    assert_eq!(ids(&b), [15810400147, 15810400148]);
    let b = run(&mut s, search(json!([{"propertyName": "dealname", "operator": "NEQ", "value": "Renewal"}])));
    assert_eq!(ids(&b), [15810400147, 15810400148]);
    let b = run(&mut s, json!({"filterGroups": [], "sorts": [{"propertyName": "amount", "direction": "DESCENDING"}], "limit": 2}));
    assert_eq!(ids(&b), [15860461964, 15810400147]);
    assert_eq!(b["paging"]["next"]["after"], 2);
    let b = run(&mut s, json!({"filterGroups": [], "sorts": [{"propertyName": "amount", "direction": "DESCENDING"}], "after": 2}));
    assert_eq!(ids(&b), [15810400148]);
    assert!(b.get("paging").is_none());
    // Groups are OR'ed.
    let b = run(&mut s, json!({"filterGroups": [
        {"filters": [{"propertyName": "amount", "operator": "LT", "value": 600}]},
        {"filters": [{"propertyName": "dealname", "operator": "EQ", "value": "Renewal"}]}
    ]}));
    assert_eq!(ids(&b), [15810400148, 15860461964]);
    let b = run(&mut s, json!({"filterGroups": [], "properties": ["dealname"]}));
    assert_eq!(b["results"][0]["properties"], json!({"dealname": "New Deal"}));
}

#[test]
fn association_pseudo_property_rejected() {
    let mut s = sim();
    let reg = builtin_registry();
    let c = call(
        &reg,
        "crm_v3_objects_notes_search_post",
        search(json!([{"propertyName": "associations.deal", "operator": "EQ", "value": "15860461964"}])),
    );
    let resp = s.execute(&c);
    assert_eq!(resp.status, 400);
    assert!(resp.body["message"].as_str().unwrap().contains("associatedWith"));
}

#[test]
fn unknown_operator_rejected() {
    let mut s = sim();
    let body = search(json!([{"propertyName": "dealname", "operator": "LIKE", "value": "x"}]));
    let resp = s.handle(HttpMethod::Post, "/objects/deal/search", &body);
    assert_eq!(resp.status, 400);
    assert_eq!(resp.body["message"], "unknown operator LIKE");
}

#[test]
fn notes_need_two_calls() {
    let mut s = sim();
    let reg = builtin_registry();
    let list = call(&reg, "crm_v3_objects_deals_associations_get", json!({"dealId": 15860461964u64, "toObjectType": "note"}));
    let resp = s.execute(&list);
    assert_eq!(resp.status, 200);
    let ids: Vec<u64> = resp.body["results"].as_array().unwrap().iter().map(|r| r["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [301, 302]);
    assert!(resp.body["results"][0].get("properties").is_none());
    let bodies = s.execute(&call(
        &reg,
        "crm_v3_objects_notes_search_post",
        json!({"filterGroups": [{"filters": [{"propertyName": "id", "operator": "IN", "values": ids}]}], "properties": ["hs_note_body"]}),
    ));
    assert_eq!(bodies.body["results"][1]["properties"]["hs_note_body"], "Sent pricing");
    // The association search endpoint gives the same set in one call.
    let via_assoc = s.execute(&call(
        &reg,
        "crm_v3_objects_notes_search_post",
        json!({"filterGroups": [], "associatedWith": [{"objectType": "deal", "objectId": 15860461964u64}]}),
    ));
    assert_eq!(via_assoc.body["total"], 2);

    let none = call(&reg, "crm_v3_objects_deals_associations_get", json!({"dealId": 15810400147u64, "toObjectType": "note"}));
    assert_eq!(s.execute(&none).body["results"], json!([]));
    let missing = call(&reg, "crm_v3_objects_deals_associations_get", json!({"dealId": 7, "toObjectType": "note"}));
    assert_eq!(s.execute(&missing).status, 404);
}

#[test]
fn update_patches_only_given_properties() {
    let mut s = sim();
    let reg = builtin_registry();
    let resp = s.execute(&call(&reg, "crm_v3_objects_deals_update_patch", json!({"dealId": 15810400148u64, "properties": {"amount": 750}})));
    assert_eq!(resp.status, 200);
    assert_eq!(resp.body["properties"]["amount"], 750);
    assert_eq!(resp.body["properties"]["dealname"], "Old Deal");
}

#[test]
fn schema_violations_are_400() {
    let mut s = sim();
    let resp = s.handle(
        HttpMethod::Post,
        "/objects/note",
        &json!({"properties": {"hs_note_body": "x", "hs_timestamp": "2024-05-05"}}),
    );
    assert_eq!(resp.status, 400);
    assert!(resp.body["message"].as_str().unwrap().starts_with("bad timestamp format"));
    assert_eq!(s.handle(HttpMethod::Get, "/nowhere", &Value::Null).status, 404);
}

#[test]
fn placeholders_never_execute() {
    let mut s = sim();
    let reg = builtin_registry();
    let c = call(&reg, "crm_v3_objects_deals_archive_delete", json!({"dealId": "{{$1.id}}"}));
    assert!(!c.resolved);
    assert_eq!(s.execute(&c).status, 400);
}

#[test]
fn fixture_errors() {
    let mut f = seed();
    f.objects.push(obj(51, ObjectType::Contact, json!({})));
    assert!(CrmSim::from_fixture(builtin_registry(), f).is_err());
    let mut f = seed();
    f.associations.push(AssociationRecord { from: r(ObjectType::Deal, 1), to: r(ObjectType::Note, 301) });
    assert!(CrmSim::from_fixture(builtin_registry(), f).is_err());
    assert!(CrmSim::from_json(builtin_registry(), "{").is_err());
}

#[derive(Clone, Debug)]
enum Op {
    Create(usize),
    Delete(usize),
    Associate(usize, usize),
    Update(usize),
}

const TYPES: [ObjectType; 4] = [ObjectType::Contact, ObjectType::Company, ObjectType::Deal, ObjectType::Note];

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (0usize..4).prop_map(Op::Create),
            (0usize..16).prop_map(Op::Delete),
            (0usize..16, 0usize..16).prop_map(|(a, b)| Op::Associate(a, b)),
            (0usize..16).prop_map(Op::Update),
        ],
        0..40,
    )
}

/// Replays ops against the store, returning every response as text.
fn replay(s: &mut CrmSim, ops: &[Op]) -> Vec<String> {
    let reg = builtin_registry();
    let mut out = Vec::new();
    for op in ops {
        let ids: Vec<(ObjectType, u64)> = s.objects().map(|o| (o.object_type, o.id)).collect();
        let pick = |i: usize| ids[i % ids.len()];
        let c = match op {
            Op::Create(t) => {
                let t = TYPES[*t];
                let props = match t {
                    ObjectType::Company => json!({"name": "Acme"}),
                    ObjectType::Deal => json!({"dealname": "D"}),
                    ObjectType::Note => json!({"hs_note_body": "n", "hs_timestamp": "2024-05-05T00:00:00.000Z"}),
                    _ => json!({"firstname": "F"}),
                };
                call(&reg, &format!("crm_v3_objects_{}_create_post", t.plural()), json!({"properties": props}))
            }
            Op::Delete(i) => {
                let (t, id) = pick(*i);
                if t == ObjectType::Owner || t == ObjectType::Task {
                    continue;
                }
                call(&reg, &format!("crm_v3_objects_{}_archive_delete", t.plural()), json!({format!("{t}Id"): id}))
            }
            Op::Update(i) => {
                let (t, id) = pick(*i);
                call(&reg, &format!("crm_v3_objects_{}_update_patch", t.plural()), json!({format!("{t}Id"): id, "properties": {}}))
            }
            Op::Associate(a, b) => {
                let (ta, ia) = pick(*a);
                let (tb, ib) = pick(*b);
                if ta == tb {
                    continue;
                }
                call(
                    &reg,
                    &format!("crm_v3_objects_{}_associate_put", ta.plural()),
                    json!({format!("{ta}Id"): ia, "toObjectType": tb.as_str(), "toObjectId": ib}),
                )
            }
        };
        let resp = s.execute(&c);
        out.push(serde_json::to_string(&resp).unwrap());
    }
    out
}

proptest! {
    #[test]
    fn no_association_outlives_an_endpoint(ops in ops()) {
        let mut s = sim();
        replay(&mut s, &ops);
        let snap = s.snapshot();
        for a in &snap.associations {
            for end in [a.from, a.to] {
                let o = s.object(end.id).unwrap();
                prop_assert!(!o.archived);
                prop_assert_eq!(o.object_type, end.object_type);
            }
        }
    }

    #[test]
    fn replay_is_deterministic_and_reset_restores_seed(ops in ops()) {
        let mut a = sim();
        let mut b = sim();
        let seed_digest = a.digest();
        let ra = replay(&mut a, &ops);
        let rb = replay(&mut b, &ops);
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(a.digest(), b.digest());
        a.reset();
        prop_assert_eq!(a.digest(), seed_digest);
    }
}

#[test]
fn snapshot_round_trips_through_json() {
    let mut s = sim();
    let reg = builtin_registry();
    s.execute(&call(&reg, "crm_v3_objects_contacts_create_post", json!({"properties": {"firstname": "Zed"}})));
    let text = s.snapshot_json();
    let restored = CrmSim::from_json(builtin_registry(), &text).unwrap();
    assert_eq!(restored.digest(), s.digest());
}
