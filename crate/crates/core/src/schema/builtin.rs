//! The shipped HubSpot-like schema corpus.
//!
//! Contacts, companies, deals, notes and tasks get the full CRUDA set plus an
//! association listing; owners are read-only, as in HubSpot.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Category, FunctionSchema, HttpMethod, ObjectType, ParamKind as K, ParamSpec as P, Registry};

pub const FILTER_OPERATORS: [&str; 12] = [
    "EQ",
    "NEQ",
    "GT",
    "GTE",
    "LT",
    "LTE",
    "CONTAINS",
    "CONTAINS_TOKEN",
    "IN",
    "NOT_IN",
    "HAS_PROPERTY",
    "NOT_HAS_PROPERTY",
];

const WRITABLE: [ObjectType; 5] = [
    ObjectType::Contact,
    ObjectType::Company,
    ObjectType::Deal,
    ObjectType::Note,
    ObjectType::Task,
];

/// Writable properties per object type. `required` marks properties that
/// must be present on create.
fn catalog(t: ObjectType) -> Vec<P> {
    let owner = || P::new("hubspot_owner_id", K::Identifier);
    match t {
        ObjectType::Contact => vec![
            P::new("firstname", K::String),
            P::new("lastname", K::String),
            P::new("email", K::String),
            P::new("phone", K::String),
            P::new("company", K::String),
            P::new("jobtitle", K::String),
            P::new("lifecyclestage", K::String).one_of(&[
                "subscriber",
                "lead",
                "marketingqualifiedlead",
                "salesqualifiedlead",
                "opportunity",
                "customer",
            ]),
            owner(),
        ],
        ObjectType::Company => vec![
            P::new("name", K::String).required(),
            P::new("domain", K::String),
            P::new("industry", K::String),
            P::new("city", K::String),
            P::new("phone", K::String),
            P::new("numberofemployees", K::Number).range(Some(0.0), None),
            P::new("annualrevenue", K::Number).range(Some(0.0), None),
            owner(),
        ],
        ObjectType::Deal => vec![
            P::new("dealname", K::String).required(),
            P::new("amount", K::Number).range(Some(0.0), None),
            P::new("closedate", K::Timestamp),
            P::new("dealstage", K::String).one_of(&[
                "appointmentscheduled",
                "qualifiedtobuy",
                "presentationscheduled",
                "decisionmakerboughtin",
                "contractsent",
                "closedwon",
                "closedlost",
            ]),
            P::new("pipeline", K::String),
            owner(),
        ],
        ObjectType::Note => vec![
            P::new("hs_note_body", K::String).required(),
            P::new("hs_timestamp", K::Timestamp).required(),
            owner(),
        ],
        ObjectType::Task => vec![
            P::new("hs_task_subject", K::String).required(),
            P::new("hs_task_body", K::String),
            P::new("hs_task_status", K::String).one_of(&[
                "NOT_STARTED",
                "IN_PROGRESS",
                "WAITING",
                "COMPLETED",
                "DEFERRED",
            ]),
            P::new("hs_task_priority", K::String).one_of(&["LOW", "MEDIUM", "HIGH"]),
            P::new("hs_timestamp", K::Timestamp).required(),
            owner(),
        ],
        _ => Vec::new(),
    }
}

fn noun(t: ObjectType) -> &'static str {
    match t {
        ObjectType::LineItem => "line item",
        other => other.as_str(),
    }
}

fn plural_noun(t: ObjectType) -> String {
    match t {
        ObjectType::Company => "companies".into(),
        ObjectType::LineItem => "line items".into(),
        other => format!("{}s", other.as_str()),
    }
}

fn id_param(t: ObjectType) -> String {
    format!("{}Id", t.as_str())
}

fn schema(
    t: ObjectType,
    op: &str,
    method: HttpMethod,
    path: String,
    category: Category,
    description: String,
    parameters: Vec<P>,
    required: Vec<String>,
) -> FunctionSchema {
    FunctionSchema {
        name: format!("crm_v3_objects_{}_{}_{}", t.plural(), op, method.as_str().to_ascii_lowercase()),
        description,
        method,
        path,
        parameters,
        required,
        object_type: t,
        category,
    }
}

fn search_params() -> Vec<P> {
    let filter = P::new("filter", K::Object).with_children(vec![
        P::new("propertyName", K::String).required(),
        P::new("operator", K::String).required().one_of(&FILTER_OPERATORS),
        P::new("value", K::Scalar),
        P::new("values", K::Array).with_children(vec![P::new("item", K::Scalar)]),
    ]);
    let group = P::new("filterGroup", K::Object).with_children(vec![P::new("filters", K::Array)
        .required()
        .max_items(3)
        .with_children(vec![filter])]);
    let object_types: Vec<&str> = ObjectType::ALL.iter().map(|t| t.as_str()).collect();
    vec![
        P::new("filterGroups", K::Array).max_items(5).with_children(vec![group]),
        P::new("properties", K::Array).with_children(vec![P::new("item", K::String)]),
        P::new("limit", K::Number).range(Some(1.0), Some(100.0)),
        P::new("after", K::Number).range(Some(0.0), None),
        P::new("sorts", K::Array).with_children(vec![P::new("sort", K::Object).with_children(vec![
            P::new("propertyName", K::String).required(),
            P::new("direction", K::String).one_of(&["ASCENDING", "DESCENDING"]),
        ])]),
        P::new("associatedWith", K::Array).with_children(vec![P::new("association", K::Object)
            .with_children(vec![
                P::new("objectType", K::String).required().one_of(&object_types),
                P::new("objectId", K::Identifier).required(),
            ])]),
    ]
}

fn property_list() -> P {
    P::new("properties", K::Array).with_children(vec![P::new("item", K::String)])
}

fn writable_schemas(t: ObjectType) -> Vec<FunctionSchema> {
    let ty = t.as_str();
    let id = id_param(t);
    let n = noun(t);
    let ns = plural_noun(t);
    let props = catalog(t);
    let props_optional: Vec<P> = props
        .iter()
        .cloned()
        .map(|mut p| {
            p.required = false;
            p
        })
        .collect();
    let targets: Vec<&str> = WRITABLE.iter().filter(|o| **o != t).map(|o| o.as_str()).collect();
    vec![
        schema(
            t,
            "create",
            HttpMethod::Post,
            format!("/objects/{ty}"),
            Category::Create,
            format!("Create a new {n} with the given properties and return it with its id."),
            vec![P::new("properties", K::Object).with_children(props)],
            vec!["properties".into()],
        ),
        schema(
            t,
            "search",
            HttpMethod::Post,
            format!("/objects/{ty}/search"),
            Category::Read,
            format!(
                "Search {ns} by property filters, optionally restricted to records associated \
                 with another object; returns matching {ns} with the requested properties."
            ),
            search_params(),
            vec!["filterGroups".into()],
        ),
        schema(
            t,
            "read",
            HttpMethod::Get,
            format!("/objects/{ty}/{{{id}}}"),
            Category::Read,
            format!("Read a single {n} by its id, returning the requested properties."),
            vec![P::new(&id, K::Identifier), property_list()],
            vec![id.clone()],
        ),
        schema(
            t,
            "update",
            HttpMethod::Patch,
            format!("/objects/{ty}/{{{id}}}"),
            Category::Update,
            format!("Update properties of an existing {n} identified by its id; only the given properties change."),
            vec![P::new(&id, K::Identifier), P::new("properties", K::Object).with_children(props_optional)],
            vec![id.clone(), "properties".into()],
        ),
        schema(
            t,
            "archive",
            HttpMethod::Delete,
            format!("/objects/{ty}/{{{id}}}"),
            Category::Delete,
            format!("Delete (archive) a {n} by its id."),
            vec![P::new(&id, K::Identifier)],
            vec![id.clone()],
        ),
        schema(
            t,
            "associate",
            HttpMethod::Put,
            format!("/associations/{ty}/{{{id}}}/{{toObjectType}}/{{toObjectId}}"),
            Category::Associate,
            format!("Associate (link, assign) a {n} with another CRM object such as a contact, company, deal, note or task."),
            vec![
                P::new(&id, K::Identifier),
                P::new("toObjectType", K::String).one_of(&targets),
                P::new("toObjectId", K::Identifier),
            ],
            vec![id.clone(), "toObjectType".into(), "toObjectId".into()],
        ),
        schema(
            t,
            "associations",
            HttpMethod::Get,
            format!("/associations/{ty}/{{{id}}}/{{toObjectType}}"),
            Category::Read,
            format!("List the ids of objects of a given type associated with a {n}."),
            vec![P::new(&id, K::Identifier), P::new("toObjectType", K::String).one_of(&targets)],
            vec![id, "toObjectType".into()],
        ),
    ]
}

fn owner_schemas() -> Vec<FunctionSchema> {
    let t = ObjectType::Owner;
    vec![
        schema(
            t,
            "search",
            HttpMethod::Post,
            "/objects/owner/search".into(),
            Category::Read,
            "Search owners (users) by email or name; returns matching owners with their ids.".into(),
            search_params(),
            vec!["filterGroups".into()],
        ),
        schema(
            t,
            "read",
            HttpMethod::Get,
            "/objects/owner/{ownerId}".into(),
            Category::Read,
            "Read a single owner by its id.".into(),
            vec![P::new("ownerId", K::Identifier), property_list()],
            vec!["ownerId".to_string()],
        ),
    ]
}

/// Property kinds for owners, which have no create/update schema.
pub(crate) fn owner_catalog() -> Vec<P> {
    vec![
        P::new("email", K::String),
        P::new("firstName", K::String),
        P::new("lastName", K::String),
        P::new("userId", K::Number),
    ]
}

/// The shipped registry: 37 schemas.
pub fn builtin_registry() -> Registry {
    let mut reg = Registry::new();
    for t in WRITABLE {
        for s in writable_schemas(t) {
            reg.register(s).expect("builtin schema is valid");
        }
    }
    for s in owner_schemas() {
        reg.register(s).expect("builtin schema is valid");
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Route;

    #[test]
    fn corpus_size_and_routes() {
        let reg = builtin_registry();
        assert_eq!(reg.len(), 37);
        for s in reg.iter() {
            assert!(s.route().is_some(), "{} has no route", s.name);
            assert!(s.name.starts_with("crm_v3_objects_"), "{}", s.name);
        }
        assert_eq!(reg.by_route(ObjectType::Note, Route::Search).len(), 1);
        assert_eq!(reg.by_route(ObjectType::Owner, Route::Create).len(), 0);
    }

    #[test]
    fn property_kinds() {
        let reg = builtin_registry();
        assert_eq!(reg.property_kind(ObjectType::Deal, "closedate"), Some(K::Timestamp));
        assert_eq!(reg.property_kind(ObjectType::Deal, "amount"), Some(K::Number));
        assert_eq!(reg.property_kind(ObjectType::Note, "hs_createdate"), Some(K::Timestamp));
        assert_eq!(reg.property_kind(ObjectType::Owner, "email"), Some(K::String));
        assert_eq!(reg.property_kind(ObjectType::Deal, "notes"), None);
    }
}
