mod common;

use common::{line, obj, query, script, seed};
use cruda_core::backend::ZeroClock;
use cruda_core::baseline::{
    extract_tool_call, parse_split, retrieve_top_k, single_system_prompt, tokens, MultiApi, RetrievalError, SingleApi,
};
use cruda_core::pipeline::{Failure, Pipeline, SimClient};
use cruda_core::schema::{builtin_registry, Category, ObjectType, Registry};
use cruda_core::sim::CrmSim;
use serde_json::json;

const NOTES_SEARCH: &str = "crm_v3_objects_notes_search_post";
const COMPANY_SEARCH: &str = "crm_v3_objects_companies_search_post";
const COMPANY_DELETE: &str = "crm_v3_objects_companies_archive_delete";

fn client() -> SimClient {
    SimClient { sim: CrmSim::from_fixture(builtin_registry(), seed()).unwrap(), latency_s: 0.1 }
}

#[test]
fn retrieval_includes_gold() {
    let reg = builtin_registry();
    let text = "Search all notes with associated deal 15860461964 (include note body, creation date, note title)";
    let r = retrieve_top_k("q", text, &reg, NOTES_SEARCH, 5).unwrap();
    assert_eq!(r.ranked.len(), 5);
    assert!(r.gold_included);
    assert!(r.names().contains(&NOTES_SEARCH));
    assert_eq!(r, retrieve_top_k("q", text, &reg, NOTES_SEARCH, 5).unwrap());
}

#[test]
fn registry_of_five_returns_everything() {
    let full = builtin_registry();
    let mut reg = Registry::new();
    for s in full.iter().filter(|s| s.object_type == ObjectType::Company).take(5) {
        reg.register(s.clone()).unwrap();
    }
    let r = retrieve_top_k("q", "zzz", &reg, COMPANY_DELETE, 5).unwrap();
    let mut names = r.names();
    names.sort();
    let mut all: Vec<&str> = reg.iter().map(|s| s.name.as_str()).collect();
    all.sort();
    assert_eq!(names, all);
}

#[test]
fn gold_swapped_into_last_slot() {
    let reg = builtin_registry();
    let text = "search notes note body note timestamp";
    let natural = retrieve_top_k("q", text, &reg, NOTES_SEARCH, 5).unwrap();
    let gold = "crm_v3_objects_tasks_archive_delete";
    assert!(!natural.names().contains(&gold));
    let r = retrieve_top_k("q", text, &reg, gold, 5).unwrap();
    assert_eq!(r.names()[..4], natural.names()[..4]);
    assert_eq!(r.names()[4], gold);
    assert!(r.gold_included);
    assert_eq!(
        retrieve_top_k("q", text, &reg, "nope", 5).unwrap_err(),
        RetrievalError::UnknownGold("nope".into())
    );
}

#[test]
fn tokenizer_stems_plurals() {
    let t = tokens("Search all Companies with notes");
    assert!(t.contains("company") && t.contains("note") && t.contains("search"));
    assert!(!t.contains("all"));
}

#[test]
fn prompt_variant_follows_model() {
    let claude = single_system_prompt("claude-3-5-sonnet", "7");
    let gpt = single_system_prompt("gpt-4o", "7");
    assert!(claude.starts_with("I am hubspot owner id 7."));
    assert!(claude.contains("stop_reason"));
    assert!(!gpt.contains("stop_reason"));
}

#[test]
fn tool_call_extraction() {
    let (n, i) = extract_tool_call("Here you go:\n```json\n{\"name\": \"x\", \"input\": {\"a\": 1}}\n```").unwrap();
    assert_eq!((n.as_str(), i), ("x", json!({"a": 1})));
    let (n, _) = extract_tool_call(r#"[{"type": "text", "text": "ok"}, {"type": "tool_use", "name": "y", "input": {}}]"#).unwrap();
    assert_eq!(n, "y");
    assert!(extract_tool_call("no json here").is_err());
}

fn notes_query() -> cruda_core::dataset::QueryRecord {
    let mut q = query(
        "a13",
        "Search all notes with associated deal 15860461964 (include note body, creation date, note title)",
        Category::Read,
    );
    q.gold_functions = vec![NOTES_SEARCH.into()];
    q
}

#[test]
fn single_api_success_uses_one_completion() {
    let out = json!({
        "type": "tool_use", "name": NOTES_SEARCH,
        "input": {"after": 0, "filterGroups": [], "associatedWith": [{"objectType": "deal", "objectId": 15860461964u64}],
                  "limit": 10, "properties": ["hs_note_body", "hs_createdate"], "sorts": []}
    });
    let backend = script("gpt-4o", vec![line("a13", "gen", 1, &out.to_string())]);
    let p = SingleApi::new(&backend, builtin_registry());
    let r = p.run(&notes_query(), 0, &mut client(), &ZeroClock);
    assert!(r.success, "{:?} {:?}", r.failure, r.responses);
    assert_eq!(r.completions(), 1);
    assert_eq!(r.responses[0].body["total"], 2);
    assert!((r.latency_s() - 1.1).abs() < 1e-9);
    let user = &r.transcript[0].messages[1].content;
    assert!(user.contains(NOTES_SEARCH) && user.ends_with(&notes_query().text));
}

#[test]
fn single_api_property_filter_on_association_is_rejected_by_sim() {
    let out = json!({"name": NOTES_SEARCH, "input": {"filterGroups": [{"filters": [
        {"operator": "EQ", "propertyName": "associations.deal", "value": "15860461964"}]}]}});
    let backend = script("gpt-4o", vec![line("a13", "gen", 1, &out.to_string())]);
    let r = SingleApi::new(&backend, builtin_registry()).run(&notes_query(), 0, &mut client(), &ZeroClock);
    assert!(!r.success);
    assert_eq!(r.failure, Some(Failure::Execution { step: 1, status: 400 }));
}

#[test]
fn single_api_missing_required_fails_software_eval() {
    let mut q = query("c1", "Create a deal worth 500", Category::Create);
    q.gold_functions = vec!["crm_v3_objects_deals_create_post".into()];
    let out = json!({"name": "crm_v3_objects_deals_create_post", "input": {"properties": {"amount": 500}}});
    let backend = script("gpt-4o", vec![line("c1", "gen", 1, &out.to_string())]);
    let mut c = client();
    let r = SingleApi::new(&backend, builtin_registry()).run(&q, 0, &mut c, &ZeroClock);
    assert!(!r.success);
    assert_eq!(r.responses[0].status, 400);
    assert!(r.responses[0].body["message"].as_str().unwrap().contains("dealname"));
}

#[test]
fn single_api_rejects_function_outside_tools() {
    let out = json!({"name": "crm_v3_objects_tasks_archive_delete", "input": {"taskId": 1}});
    let backend = script("gpt-4o", vec![line("a13", "gen", 1, &out.to_string())]);
    let r = SingleApi::new(&backend, builtin_registry()).run(&notes_query(), 0, &mut client(), &ZeroClock);
    assert!(r.calls.is_empty());
    match r.failure {
        Some(Failure::BadOutput { stage, message }) => {
            assert_eq!(stage, "gen");
            assert!(message.contains("not among the provided tools"));
        }
        other => panic!("{other:?}"),
    }
}

fn lakka_query() -> cruda_core::dataset::QueryRecord {
    let mut q = query("m1", "Delete the 'company' named 'Lakka Tech Solutions' for the current user.", Category::Delete);
    q.n_calls = 2;
    q.gold_functions = vec![COMPANY_SEARCH.into(), COMPANY_DELETE.into()];
    q
}

fn lakka_script(company_id: u64) -> Vec<cruda_core::backend::ScriptLine> {
    let search = json!({"name": COMPANY_SEARCH, "input": {"filterGroups": [{"filters": [
        {"propertyName": "name", "operator": "EQ", "value": "Lakka Tech Solutions"}]}], "properties": ["id"]}});
    let delete = json!({"name": COMPANY_DELETE, "input": {"companyId": company_id.to_string()}});
    vec![
        line(
            "m1",
            "split",
            1,
            "Search for the company with the name 'Lakka Tech Solutions' (include ID)\nDelete the company with the given company ID extracted from the previous task",
        ),
        line("m1", "gen-1", 1, &search.to_string()),
        line("m1", "rewrite", 1, &format!("delete the company {company_id}")),
        line("m1", "gen-2", 1, &delete.to_string()),
    ]
}

#[test]
fn multi_api_split_search_delete() {
    let backend = script("gpt-4o", lakka_script(201));
    let mut c = client();
    let r = MultiApi::new(&backend, builtin_registry()).run(&lakka_query(), 0, &mut c, &ZeroClock);
    assert!(r.success, "{:?}", r.failure);
    assert_eq!(r.completions(), 4);
    assert_eq!(r.calls.len(), 2);
    assert!((r.latency_s() - 4.2).abs() < 1e-9);
    assert!(c.sim.object(201).unwrap().archived);
    let stages: Vec<&str> = r.transcript.iter().map(|t| t.stage.as_str()).collect();
    assert_eq!(stages, ["split", "gen-1", "rewrite", "gen-2"]);
    assert!(r.transcript[2].messages[1].content.contains("\"id\":201"));
}

#[test]
fn multi_api_rewrite_carries_searched_id() {
    let mut fx = seed();
    fx.objects.retain(|o| o.id != 201);
    fx.objects.push(obj(88, ObjectType::Company, json!({"name": "Lakka Tech Solutions"})));
    let mut c = SimClient { sim: CrmSim::from_fixture(builtin_registry(), fx).unwrap(), latency_s: 0.0 };
    let backend = script("gpt-4o", lakka_script(88));
    let r = MultiApi::new(&backend, builtin_registry()).run(&lakka_query(), 0, &mut c, &ZeroClock);
    assert!(r.success, "{:?}", r.failure);
    assert_eq!(r.calls[1].path, "/objects/company/88");
    assert!(r.transcript[3].messages[1].content.ends_with("Query: delete the company 88"));
}

#[test]
fn multi_api_bad_split_fails_at_stage_one() {
    let backend = script("gpt-4o", vec![line("m1", "split", 1, "Just one step")]);
    let r = MultiApi::new(&backend, builtin_registry()).run(&lakka_query(), 0, &mut client(), &ZeroClock);
    assert_eq!(r.completions(), 1);
    assert!(matches!(r.failure, Some(Failure::BadOutput { ref stage, .. }) if stage == "split"));
    assert!(parse_split("a\n\n b \n").is_ok());
    assert!(parse_split("a\nb\nc").is_err());
}
