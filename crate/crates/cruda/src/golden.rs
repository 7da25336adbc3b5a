//! The golden corpus: a seed CRM, 142 one-call and 58 two-call queries with
//! their reference plans, and scripted model replies for every pipeline.
//!
//! Gold calls are not written by hand. Each reference plan is executed on a
//! fresh copy of the seed and the calls it actually sent become the gold
//! calls, so a record can never disagree with the simulator.

use std::collections::BTreeMap;

use cruda_core::backend::{ScriptLine, ScriptedBackend, ZeroClock};
use cruda_core::dataset::QueryRecord;
use cruda_core::pipeline::{execute_plan, SimClient, Trace};
use cruda_core::plan::Plan;
use cruda_core::schema::{ApiCall, Category, ObjectType, Registry};
use cruda_core::sim::{ApiResponse, AssociationRecord, CrmObject, CrmSim, Fixture, ObjectRef};
use cruda_core::validator::Validator;
use serde_json::{json, Value};

pub const OWNER_ID: u64 = 325420860;
pub const OWNER_EMAIL: &str = "temp@temp.ai";
pub const FIXTURE_FILE: &str = "seed.json";
/// Latency charged for every scripted completion, in seconds.
pub const SCRIPT_LATENCY_S: f64 = 1.0;

const SEED_TIME: &str = "2024-05-01T00:00:00.000Z";

const CONTACTS: [(&str, &str); 30] = [
    ("Gary", "Stone"),
    ("Ada", "Byron"),
    ("Lin", "Qiu"),
    ("Maria", "Lopez"),
    ("Tom", "Reed"),
    ("Nina", "Patel"),
    ("Omar", "Haddad"),
    ("Priya", "Nair"),
    ("Jonas", "Berg"),
    ("Elena", "Rossi"),
    ("Kofi", "Mensah"),
    ("Sara", "Cohen"),
    ("Ivan", "Petrov"),
    ("Mei", "Tanaka"),
    ("Lucas", "Silva"),
    ("Hana", "Kim"),
    ("Diego", "Ruiz"),
    ("Fatima", "Zahra"),
    ("Ben", "Carter"),
    ("Chloe", "Martin"),
    ("Arjun", "Rao"),
    ("Zoe", "Evans"),
    ("Yusuf", "Demir"),
    ("Ingrid", "Olsen"),
    ("Paolo", "Conti"),
    ("Aisha", "Bello"),
    ("Keiko", "Sato"),
    ("Liam", "Walsh"),
    ("Noor", "Aziz"),
    ("Emma", "Fischer"),
];

const COMPANIES: [&str; 25] = [
    "Lakka Tech Solutions",
    "Acme Robotics",
    "Blue Harbor Foods",
    "Northwind Traders",
    "Cedar Health",
    "Orbit Logistics",
    "Pine Valley Farms",
    "Quantum Ledger",
    "Redwood Analytics",
    "Silverline Media",
    "Tidewater Energy",
    "Umbra Security",
    "Vertex Builders",
    "Willow Dental",
    "Xenon Labs",
    "Yellowstone Outfitters",
    "Zephyr Airlines",
    "Amber Textiles",
    "Birch Capital",
    "Coral Bay Resorts",
    "Delta Freight",
    "Ember Studios",
    "Fjord Marine",
    "Granite Insurance",
    "Harbor Light Books",
];

const DEALS: [&str; 20] = [
    "New Deal",
    "Renewal",
    "Expansion Q3",
    "Pilot Program",
    "Annual License",
    "Support Upgrade",
    "Cloud Migration",
    "Data Audit",
    "Training Package",
    "Hardware Refresh",
    "Consulting Retainer",
    "Security Review",
    "Mobile Rollout",
    "Analytics Suite",
    "Partner Bundle",
    "Onboarding Pack",
    "Fleet Tracking",
    "Loyalty Program",
    "Archive Storage",
    "Field Service",
];

const NOTES: [&str; 15] = [
    "Kickoff went well",
    "Sent pricing",
    "Asked for references",
    "Legal review pending",
    "Budget approved",
    "Demo scheduled",
    "Competitor in play",
    "Waiting on procurement",
    "Champion changed roles",
    "Requested discount",
    "Security questionnaire done",
    "Signed NDA",
    "Follow up next quarter",
    "Expanded scope",
    "Renewal risk flagged",
];

const TASKS: [&str; 15] = [
    "Call back",
    "Send deck",
    "Book demo",
    "Draft proposal",
    "Check invoice",
    "Update forecast",
    "Share case study",
    "Confirm budget",
    "Collect feedback",
    "Plan workshop",
    "Review contract",
    "Prepare quote",
    "Introduce partner",
    "Renew license",
    "Schedule training",
];

const INDUSTRIES: [&str; 5] = ["Software", "Food", "Logistics", "Healthcare", "Finance"];
const CITIES: [&str; 5] = ["Boston", "Austin", "Denver", "Seattle", "Chicago"];
const STAGES: [&str; 7] = [
    "appointmentscheduled",
    "qualifiedtobuy",
    "presentationscheduled",
    "decisionmakerboughtin",
    "contractsent",
    "closedwon",
    "closedlost",
];
const LIFECYCLE: [&str; 6] = ["subscriber", "lead", "marketingqualifiedlead", "salesqualifiedlead", "opportunity", "customer"];
const TASK_STATUS: [&str; 5] = ["NOT_STARTED", "IN_PROGRESS", "WAITING", "COMPLETED", "DEFERRED"];
const PRIORITY: [&str; 3] = ["LOW", "MEDIUM", "HIGH"];
const JOBS: [&str; 6] = ["Engineer", "Buyer", "CFO", "Analyst", "Director", "Consultant"];

pub fn contact_id(i: usize) -> u64 {
    51 + i as u64
}

pub fn company_id(i: usize) -> u64 {
    201 + i as u64
}

pub fn deal_id(i: usize) -> u64 {
    match i {
        0 => 15810400147,
        1 => 15860461964,
        _ => 15860462000 + i as u64,
    }
}

pub fn note_id(i: usize) -> u64 {
    301 + i as u64
}

pub fn task_id(i: usize) -> u64 {
    401 + i as u64
}

fn email(i: usize) -> String {
    format!("{}@example.com", CONTACTS[i].0.to_lowercase())
}

fn domain(i: usize) -> String {
    let slug: String = COMPANIES[i].split_whitespace().next().unwrap_or("x").to_lowercase();
    format!("{slug}.com")
}

fn deal_amount(i: usize) -> i64 {
    match i {
        0 => 1000,
        1 => 2500,
        _ => 1500 + 850 * i as i64,
    }
}

fn day(d: usize) -> String {
    format!("2024-05-{:02}T00:00:00.000Z", d)
}

fn object(id: u64, t: ObjectType, props: Value) -> CrmObject {
    CrmObject {
        id,
        object_type: t,
        properties: serde_json::from_value(props).expect("object literal"),
        created_at: SEED_TIME.into(),
        updated_at: SEED_TIME.into(),
        archived: false,
    }
}

fn link(a: (ObjectType, u64), b: (ObjectType, u64)) -> AssociationRecord {
    AssociationRecord {
        from: ObjectRef { object_type: a.0, id: a.1 },
        to: ObjectRef { object_type: b.0, id: b.1 },
    }
}

/// Which deal note `i` is attached to.
fn note_deal(i: usize) -> usize {
    if i < 2 {
        1
    } else {
        i % DEALS.len()
    }
}

pub fn seed_fixture() -> Fixture {
    use ObjectType::*;
    let mut objects = vec![object(
        OWNER_ID,
        Owner,
        json!({"email": OWNER_EMAIL, "firstname": "Temp", "lastname": "User"}),
    )];
    for (i, (first, last)) in CONTACTS.iter().enumerate() {
        objects.push(object(
            contact_id(i),
            Contact,
            json!({
                "firstname": first, "lastname": last, "email": email(i),
                "phone": format!("+1 555 01{i:02}"), "jobtitle": JOBS[i % JOBS.len()],
                "lifecyclestage": LIFECYCLE[i % LIFECYCLE.len()],
            }),
        ));
    }
    for (i, name) in COMPANIES.iter().enumerate() {
        objects.push(object(
            company_id(i),
            Company,
            json!({
                "name": name, "domain": domain(i), "industry": INDUSTRIES[i % 5], "city": CITIES[i % 5],
                "numberofemployees": 20 * (i + 1), "annualrevenue": 250000 * (i + 1),
            }),
        ));
    }
    for (i, name) in DEALS.iter().enumerate() {
        let mut props = json!({
            "dealname": name, "amount": deal_amount(i), "dealstage": STAGES[i % STAGES.len()],
            "pipeline": "default", "closedate": format!("2024-{:02}-15T00:00:00.000Z", 6 + i % 6),
        });
        if i % 2 == 0 {
            props["hubspot_owner_id"] = json!(OWNER_ID.to_string());
        }
        objects.push(object(deal_id(i), Deal, props));
    }
    for (i, body) in NOTES.iter().enumerate() {
        objects.push(object(note_id(i), Note, json!({"hs_note_body": body, "hs_timestamp": day(1 + i % 4)})));
    }
    for (i, subject) in TASKS.iter().enumerate() {
        objects.push(object(
            task_id(i),
            Task,
            json!({
                "hs_task_subject": subject, "hs_task_status": TASK_STATUS[i % 5],
                "hs_task_priority": PRIORITY[i % 3], "hs_timestamp": day(6 + i),
            }),
        ));
    }
    let mut associations = Vec::new();
    for i in 0..DEALS.len() {
        associations.push(link((Deal, deal_id(i)), (Company, company_id(i))));
    }
    for i in 0..COMPANIES.len() {
        associations.push(link((Contact, contact_id(i)), (Company, company_id(i))));
    }
    for i in 0..NOTES.len() {
        associations.push(link((Deal, deal_id(note_deal(i))), (Note, note_id(i))));
    }
    for i in 0..TASKS.len() {
        associations.push(link((Task, task_id(i)), (Contact, contact_id(i))));
    }
    Fixture { now: None, objects, associations }
}

/// A corpus entry: the record plus what a well-behaved model would say.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldenQuery {
    pub record: QueryRecord,
    /// Reference plan in the call language.
    pub plan: String,
    /// The two sub-tasks a decomposing model would produce.
    pub subtasks: Option<[String; 2]>,
    /// The second sub-task restated with the value found by the first.
    pub rewrite: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub fixture: Fixture,
    pub single: Vec<GoldenQuery>,
    pub multi: Vec<GoldenQuery>,
}

impl Corpus {
    pub fn all(&self) -> impl Iterator<Item = &GoldenQuery> {
        self.single.iter().chain(&self.multi)
    }
}

struct Draft {
    id: String,
    text: String,
    category: Category,
    plan: String,
    subtasks: Option<[String; 2]>,
    /// `{id}` is replaced with the id returned by step 1.
    rewrite: Option<String>,
}

fn draft(id: String, category: Category, text: String, plan: String) -> Draft {
    Draft { id, text, category, plan, subtasks: None, rewrite: None }
}

fn single_drafts() -> Vec<Draft> {
    use Category::*;
    let mut out = Vec::new();
    let mut push = |cat: Category, text: String, plan: String| {
        let id = format!("s{:03}", out.len() + 1);
        out.push(draft(id, cat, text, plan));
    };

    // CREATE: 30
    let people = [
        ("Rosa", "Diaz", "Designer"),
        ("Hugo", "Lind", "Buyer"),
        ("Yara", "Costa", "CTO"),
        ("Felix", "Braun", "Analyst"),
        ("Lena", "Vogel", "Engineer"),
        ("Raj", "Menon", "Director"),
    ];
    for (first, last, job) in people {
        let mail = format!("{}.{}@example.com", first.to_lowercase(), last.to_lowercase());
        push(
            Create,
            format!("Create a contact named {first} {last} with email {mail}, job title {job}"),
            format!("CREATE contact firstname={first} lastname={last} email={mail} jobtitle={job}"),
        );
    }
    let firms = [
        ("Nimbus Apps", "nimbus.io", "Berlin"),
        ("Solaris Grid", "solarisgrid.com", "Madrid"),
        ("Kite Payments", "kitepay.com", "Dublin"),
        ("Maple Clinics", "mapleclinics.ca", "Toronto"),
        ("Atlas Couriers", "atlascouriers.com", "Lisbon"),
        ("Iris Optics", "irisoptics.com", "Zurich"),
    ];
    for (name, dom, city) in firms {
        push(
            Create,
            format!("Create a company called '{name}' with domain {dom} located in {city}"),
            format!("CREATE company name=\"{name}\" domain={dom} city={city}"),
        );
    }
    let new_deals = [
        ("Spring Promo", 4200, "qualifiedtobuy"),
        ("Enterprise Tier", 18000, "presentationscheduled"),
        ("Starter Plan", 900, "appointmentscheduled"),
        ("Upsell Seats", 3100, "contractsent"),
        ("Regional Launch", 12500, "decisionmakerboughtin"),
        ("Winback Offer", 2700, "qualifiedtobuy"),
    ];
    for (i, (name, amount, stage)) in new_deals.into_iter().enumerate() {
        if i % 2 == 0 {
            push(
                Create,
                format!("Create a deal named '{name}' worth {amount} in stage {stage}, owned by me"),
                format!("CREATE deal dealname=\"{name}\" amount={amount} dealstage={stage} hubspot_owner_id={OWNER_ID}"),
            );
        } else {
            push(
                Create,
                format!("Create a deal named '{name}' worth {amount} in stage {stage}"),
                format!("CREATE deal dealname=\"{name}\" amount={amount} dealstage={stage}"),
            );
        }
    }
    let new_notes = [
        "Customer asked for a demo",
        "Pricing sheet shared",
        "Contract redlines received",
        "Champion on vacation",
        "Budget cycle starts in June",
        "Requested SOC2 report",
    ];
    for (i, body) in new_notes.into_iter().enumerate() {
        let d = 6 + i;
        push(
            Create,
            format!("Create a note saying '{body}' dated 2024-05-{d:02}"),
            format!("CREATE note hs_note_body=\"{body}\" hs_timestamp=\"{}\"", day(d)),
        );
    }
    let new_tasks = [
        ("Prepare contract", "HIGH"),
        ("Email recap", "LOW"),
        ("Verify billing address", "MEDIUM"),
        ("Plan QBR", "HIGH"),
        ("Order swag", "LOW"),
        ("Update CRM notes", "MEDIUM"),
    ];
    for (i, (subject, prio)) in new_tasks.into_iter().enumerate() {
        let d = 10 + i;
        push(
            Create,
            format!("Create a {prio} priority task '{subject}' due 2024-05-{d:02}"),
            format!("CREATE task hs_task_subject=\"{subject}\" hs_task_priority={prio} hs_timestamp=\"{}\"", day(d)),
        );
    }

    // READ: 40
    for i in 0..8 {
        let (text, plan) = match i % 4 {
            0 => (
                format!("Show contact {} (include email and phone)", contact_id(i)),
                format!("SEARCH contact {} include=[email,phone]", contact_id(i)),
            ),
            1 => (
                format!("Show company {} (include name and domain)", company_id(i)),
                format!("SEARCH company {} include=[name,domain]", company_id(i)),
            ),
            2 => (
                format!("What is the amount and stage of deal {}?", deal_id(i)),
                format!("SEARCH deal {} include=[amount,dealstage]", deal_id(i)),
            ),
            _ => (
                format!("Show the subject and status of task {}", task_id(i)),
                format!("SEARCH task {} include=[hs_task_subject,hs_task_status]", task_id(i)),
            ),
        };
        push(Read, text, plan);
    }
    for i in 0..8 {
        if i % 2 == 0 {
            let c = 3 + i;
            push(
                Read,
                format!("Find the contact with email {} (include first and last name)", email(c)),
                format!("SEARCH contact email={} include=[firstname,lastname]", email(c)),
            );
        } else {
            let c = 2 + i;
            push(
                Read,
                format!("Find the company named '{}' (include domain and city)", COMPANIES[c]),
                format!("SEARCH company name=\"{}\" include=[domain,city]", COMPANIES[c]),
            );
        }
    }
    for d in [1, 2, 3, 4, 5, 6] {
        push(
            Read,
            format!("Search all notes with associated deal {} (include note body)", deal_id(d)),
            format!("SEARCH note assoc.deal={} include=[hs_note_body]", deal_id(d)),
        );
    }
    for x in [5000, 8000, 10000, 12000, 15000, 3000] {
        push(
            Read,
            format!("List deals worth more than {x}, largest first"),
            format!("SEARCH deal amount>{x} sort=[-amount] include=[dealname,amount]"),
        );
    }
    for s in ["NOT_STARTED", "IN_PROGRESS", "WAITING", "COMPLETED"] {
        push(
            Read,
            format!("List tasks with status {s}"),
            format!("SEARCH task hs_task_status={s} include=[hs_task_subject]"),
        );
    }
    for city in ["Boston", "Austin", "Denver", "Seattle"] {
        push(Read, format!("Which companies are in {city}?"), format!("SEARCH company city={city} include=[name]"));
    }
    push(
        Read,
        format!("Find the owner with email {OWNER_EMAIL}"),
        format!("SEARCH owner email={OWNER_EMAIL} include=[firstname,lastname]"),
    );
    push(Read, format!("Show owner {OWNER_ID} (include email)"), format!("SEARCH owner {OWNER_ID} include=[email]"));
    for c in [2, 7] {
        push(
            Read,
            format!("Show the tasks linked to contact {}", contact_id(c)),
            format!("SEARCH task assoc.contact={} include=[hs_task_subject]", contact_id(c)),
        );
    }

    // UPDATE: 28
    for i in 0..7 {
        let d = 2 + i;
        let stage = STAGES[(i + 3) % STAGES.len()];
        push(
            Update,
            format!("Move deal {} to stage {stage}", deal_id(d)),
            format!("UPDATE deal {} dealstage={stage}", deal_id(d)),
        );
    }
    let titles = ["Head of Sales", "VP Finance", "Procurement Lead", "Product Owner", "Office Manager", "Data Scientist", "CEO"];
    for (i, t) in titles.into_iter().enumerate() {
        let c = 10 + i;
        push(
            Update,
            format!("Change the job title of contact {} to '{t}'", contact_id(c)),
            format!("UPDATE contact {} jobtitle=\"{t}\"", contact_id(c)),
        );
    }
    for i in 0..5 {
        let c = 5 + i;
        let n = 45 + 15 * i;
        push(
            Update,
            format!("Set the number of employees of company {} to {n}", company_id(c)),
            format!("UPDATE company {} numberofemployees={n}", company_id(c)),
        );
    }
    for i in 0..5 {
        push(
            Update,
            format!("Mark task {} as COMPLETED", task_id(i)),
            format!("UPDATE task {} hs_task_status=COMPLETED", task_id(i)),
        );
    }
    for i in 0..4 {
        let d = 10 + i;
        let n = 7000 + 500 * i;
        push(
            Update,
            format!("Set the amount of deal {} to {n}", deal_id(d)),
            format!("UPDATE deal {} amount={n}", deal_id(d)),
        );
    }

    // DELETE: 22
    for c in 20..26 {
        push(Delete, format!("Delete contact {}", contact_id(c)), format!("DELETE contact {}", contact_id(c)));
    }
    for c in 20..24 {
        push(Delete, format!("Delete company {}", company_id(c)), format!("DELETE company {}", company_id(c)));
    }
    for d in 14..18 {
        push(Delete, format!("Delete deal {}", deal_id(d)), format!("DELETE deal {}", deal_id(d)));
    }
    for n in 10..14 {
        push(Delete, format!("Delete note {}", note_id(n)), format!("DELETE note {}", note_id(n)));
    }
    for t in 10..14 {
        push(Delete, format!("Delete task {}", task_id(t)), format!("DELETE task {}", task_id(t)));
    }

    // ASSOCIATE: 22
    for i in 0..8 {
        let (c, d) = (i, (i + 5) % DEALS.len());
        push(
            Associate,
            format!("Associate contact {} with deal {}", contact_id(c), deal_id(d)),
            format!("ASSOCIATE contact {} -> deal {}", contact_id(c), deal_id(d)),
        );
    }
    for i in 0..5 {
        let (t, d) = (i + 2, i + 3);
        push(
            Associate,
            format!("Link task {} to deal {}", task_id(t), deal_id(d)),
            format!("ASSOCIATE task {} -> deal {}", task_id(t), deal_id(d)),
        );
    }
    for i in 0..5 {
        let (n, c) = (i + 2, i + 12);
        push(
            Associate,
            format!("Attach note {} to contact {}", note_id(n), contact_id(c)),
            format!("ASSOCIATE note {} -> contact {}", note_id(n), contact_id(c)),
        );
    }
    for i in 0..4 {
        let (co, t) = (i + 4, i + 6);
        push(
            Associate,
            format!("Associate company {} with task {}", company_id(co), task_id(t)),
            format!("ASSOCIATE company {} -> task {}", company_id(co), task_id(t)),
        );
    }
    out
}

fn multi_drafts() -> Vec<Draft> {
    use Category::*;
    let mut out: Vec<Draft> = Vec::new();
    let mut push = |cat: Category, text: String, plan: String, subtasks: [String; 2], rewrite: String| {
        let id = format!("m{:03}", out.len() + 1);
        let mut d = draft(id, cat, text, plan);
        d.subtasks = Some(subtasks);
        d.rewrite = Some(rewrite);
        out.push(d);
    };

    // Contact found by name, then updated: 12
    for i in 0..12 {
        let c = 2 + i;
        let (first, last) = CONTACTS[c];
        let phone = format!("+1 555 09{i:02}");
        push(
            Update,
            format!("Update the phone number of the contact named '{first} {last}' to {phone}"),
            format!("SEARCH contact firstname={first} lastname={last} include=[id]\nUPDATE contact $1.id phone=\"{phone}\""),
            [
                format!("Search for the contact named '{first} {last}' (include ID)"),
                format!("Update the phone number of the contact with the ID from the previous task to {phone}"),
            ],
            format!("Update the phone number of contact {{id}} to {phone}"),
        );
    }
    // Company found by name, then deleted: 12
    for i in 0..12 {
        let name = COMPANIES[i];
        push(
            Delete,
            format!("Delete the company named '{name}'"),
            format!("SEARCH company name=\"{name}\" include=[id]\nDELETE company $1.id"),
            [
                format!("Search for the company with the name '{name}' (include ID)"),
                "Delete the company with the given company ID extracted from the previous task".into(),
            ],
            "Delete company {id}".into(),
        );
    }
    // Contact found by email, then linked to a deal: 10
    for i in 0..10 {
        let c = 14 + i;
        let d = (i + 9) % DEALS.len();
        push(
            Associate,
            format!("Associate deal {} with the contact whose email is {}", deal_id(d), email(c)),
            format!("SEARCH contact email={} include=[id]\nASSOCIATE deal {} -> contact $1.id", email(c), deal_id(d)),
            [
                format!("Search for the contact with email {} (include ID)", email(c)),
                format!("Associate deal {} with the contact ID from the previous task", deal_id(d)),
            ],
            format!("Associate deal {} with contact {{id}}", deal_id(d)),
        );
    }
    // New task linked to a contact: 8
    let todo = ["Send agreement", "Call about renewal", "Book onsite", "Share roadmap", "Check references", "Confirm pricing", "Plan kickoff", "Follow up on demo"];
    for (i, subject) in todo.into_iter().enumerate() {
        let c = 16 + i;
        let d = 20 + i;
        push(
            Create,
            format!("Create a task '{subject}' due 2024-05-{d:02} and associate it with contact {}", contact_id(c)),
            format!(
                "CREATE task hs_task_subject=\"{subject}\" hs_timestamp=\"{}\"\nASSOCIATE task $1.id -> contact {}",
                day(d),
                contact_id(c)
            ),
            [
                format!("Create a task '{subject}' due 2024-05-{d:02}"),
                format!("Associate the task created in the previous task with contact {}", contact_id(c)),
            ],
            format!("Associate task {{id}} with contact {}", contact_id(c)),
        );
    }
    // Deal found by name, then its amount changed: 10
    for i in 0..10 {
        let d = 4 + i;
        let name = DEALS[d];
        let amount = 9000 + 250 * i;
        push(
            Update,
            format!("Set the amount of the deal named '{name}' to {amount}"),
            format!("SEARCH deal dealname=\"{name}\" include=[id]\nUPDATE deal $1.id amount={amount}"),
            [
                format!("Search for the deal named '{name}' (include ID)"),
                format!("Set the amount of the deal with the ID from the previous task to {amount}"),
            ],
            format!("Set the amount of deal {{id}} to {amount}"),
        );
    }
    // New note attached to a deal: 6
    let memo = ["Discussed timeline", "Shared ROI model", "Intro to finance team", "Reviewed SLA terms", "Agreed on pilot scope", "Sent revised quote"];
    for (i, body) in memo.into_iter().enumerate() {
        let d = 12 + i;
        let dd = 7 + i;
        push(
            Create,
            format!("Create a note '{body}' dated 2024-05-{dd:02} on deal {}", deal_id(d)),
            format!(
                "CREATE note hs_note_body=\"{body}\" hs_timestamp=\"{}\"\nASSOCIATE note $1.id -> deal {}",
                day(dd),
                deal_id(d)
            ),
            [
                format!("Create a note '{body}' dated 2024-05-{dd:02}"),
                format!("Associate the note created in the previous task with deal {}", deal_id(d)),
            ],
            format!("Associate note {{id}} with deal {}", deal_id(d)),
        );
    }
    out
}

/// Runs a plan on a fresh copy of `fixture` and returns what was sent and
/// received. Any failure is an error.
pub fn execute_reference(
    plan_text: &str,
    registry: &Registry,
    fixture: &Fixture,
) -> Result<(Vec<ApiCall>, Vec<ApiResponse>), String> {
    let plan = Plan::parse(plan_text, 1).map_err(|e| e.to_string())?;
    let backend = ScriptedBackend::new("reference");
    let sim = CrmSim::from_fixture(registry.clone(), fixture.clone()).map_err(|e| e.to_string())?;
    let mut client = SimClient { sim, latency_s: 0.0 };
    let mut trace = Trace::new(&backend, &ZeroClock, "reference", 0);
    execute_plan(&plan, registry, &mut client, &mut trace).map_err(|f| format!("{f:?}"))?;
    Ok((trace.calls, trace.responses))
}

fn finish(d: Draft, registry: &Registry, fixture: &Fixture) -> Result<GoldenQuery, String> {
    let plan = Plan::parse(&d.plan, 1).map_err(|e| format!("{}: {e}", d.id))?;
    let verdict = Validator::standard().validate_plan(&plan, registry, Some(d.category));
    if !verdict.pass() {
        return Err(format!("{}: reference plan rejected: {:?}", d.id, verdict.violations));
    }
    let (calls, responses) = execute_reference(&d.plan, registry, fixture).map_err(|e| format!("{}: {e}", d.id))?;
    let rewrite = d.rewrite.map(|r| {
        let id = responses[0].body.get("id").cloned().or_else(|| responses[0].body["results"][0].get("id").cloned());
        r.replace("{id}", &id.map(|v| v.to_string()).unwrap_or_default())
    });
    let record = QueryRecord {
        id: d.id,
        text: d.text,
        category: d.category,
        n_calls: calls.len(),
        gold_functions: calls.iter().map(|c| c.function_name.clone()).collect(),
        gold_calls: calls,
        fixture: FIXTURE_FILE.into(),
    };
    Ok(GoldenQuery { record, plan: plan.render().trim_end().to_string(), subtasks: d.subtasks, rewrite })
}

pub fn build(registry: &Registry) -> Result<Corpus, String> {
    let fixture = seed_fixture();
    let single = single_drafts().into_iter().map(|d| finish(d, registry, &fixture)).collect::<Result<_, _>>()?;
    let multi = multi_drafts().into_iter().map(|d| finish(d, registry, &fixture)).collect::<Result<_, _>>()?;
    Ok(Corpus { fixture, single, multi })
}

fn script_line(query_id: &str, stage: &str, response: String) -> ScriptLine {
    ScriptLine {
        query_id: query_id.into(),
        stage: stage.into(),
        attempt: 1,
        repeat: None,
        response,
        latency_s: SCRIPT_LATENCY_S,
        input_tokens: None,
        output_tokens: None,
    }
}

fn tool_call(registry: &Registry, call: &ApiCall) -> String {
    let input = registry.tool_input(call).expect("gold call uses a known function");
    json!({"name": call.function_name, "input": input}).to_string()
}

/// Replies that make the planner emit the reference plan on the first try.
pub fn planner_script(queries: &[GoldenQuery]) -> Vec<ScriptLine> {
    queries.iter().map(|q| script_line(&q.record.id, "plan", q.plan.clone())).collect()
}

/// Replies for the one-call baseline: the gold call as a tool call.
pub fn single_script(registry: &Registry, queries: &[GoldenQuery]) -> Vec<ScriptLine> {
    queries
        .iter()
        .filter(|q| q.record.n_calls == 1)
        .map(|q| script_line(&q.record.id, "gen", tool_call(registry, &q.record.gold_calls[0])))
        .collect()
}

/// Replies for the decompose-and-rewrite baseline.
pub fn decompose_script(registry: &Registry, queries: &[GoldenQuery]) -> Vec<ScriptLine> {
    let mut out = Vec::new();
    for q in queries {
        let (Some(sub), Some(rewrite)) = (&q.subtasks, &q.rewrite) else { continue };
        let id = &q.record.id;
        out.push(script_line(id, "split", format!("{}\n{}", sub[0], sub[1])));
        out.push(script_line(id, "gen-1", tool_call(registry, &q.record.gold_calls[0])));
        out.push(script_line(id, "rewrite", rewrite.clone()));
        out.push(script_line(id, "gen-2", tool_call(registry, &q.record.gold_calls[1])));
    }
    out
}

pub fn script_jsonl(lines: &[ScriptLine]) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(&serde_json::to_string(l).expect("script line serializes"));
        s.push('\n');
    }
    s
}

/// Broken and harmless rewrites of a reference plan, labelled by what was
/// done. Broken ones are meant to be caught by the validator.
pub fn plan_variants(q: &GoldenQuery) -> Vec<(&'static str, String)> {
    let p = &q.plan;
    let lines: Vec<&str> = p.lines().collect();
    let mut out = Vec::new();
    let mut add = |label: &'static str, text: String| {
        if text != *p {
            out.push((label, text));
        }
    };
    add("association-as-property", p.replace("assoc.", "associations."));
    add("include-association", format!("{}\nSEARCH deal associations.contact=51 include=[id]", p));
    add("bad-timestamp", p.replace("T00:00:00.000Z", ""));
    add("forward-ref", p.replace("$1.", "$2."));
    add("name-as-id", p.replace("$1.id", "\"the one from before\""));
    add("extra-delete", format!("{p}\nDELETE contact {}", contact_id(0)));
    add("duplicate-step", format!("{p}\n{}", lines[lines.len() - 1]));
    if let Some(first) = lines.first() {
        if first.starts_with("SEARCH") && !first.contains(" owner ") {
            add("too-many-filters", p.replacen(" include=", " a=1 b=2 c=3 d=4 include=", 1));
            add("limit", p.replacen(" include=", " limit=5 include=", 1));
        }
        if first.starts_with("CREATE") {
            let mut words: Vec<&str> = first.split(' ').collect();
            if words.len() > 2 {
                words.remove(2);
                let mut rest = lines[1..].to_vec();
                let head = words.join(" ");
                rest.insert(0, &head);
                add("drop-argument", rest.join("\n"));
            }
        }
    }
    if lines.len() == 2 {
        // Retype the object the step-1 id is used as.
        let mut words: Vec<&str> = lines[1].split(' ').collect();
        if words.len() > 2 && words[2] == "$1.id" {
            words[1] = if words[1] == "deal" { "contact" } else { "deal" };
            add("wrong-type-ref", format!("{}\n{}", lines[0], words.join(" ")));
        }
    }
    out
}

/// Every file the corpus is shipped as, keyed by relative path.
pub fn files(registry: &Registry, corpus: &Corpus, model_prices: &str) -> BTreeMap<String, String> {
    let single: Vec<QueryRecord> = corpus.single.iter().map(|q| q.record.clone()).collect();
    let multi: Vec<QueryRecord> = corpus.multi.iter().map(|q| q.record.clone()).collect();
    let all: Vec<GoldenQuery> = corpus.all().cloned().collect();
    let mut out = BTreeMap::new();
    out.insert("schemas.json".into(), registry.to_json() + "\n");
    out.insert(
        FIXTURE_FILE.into(),
        serde_json::to_string_pretty(&corpus.fixture).expect("fixture serializes") + "\n",
    );
    out.insert("hubbench-single.jsonl".into(), cruda_core::dataset::to_jsonl(&single));
    out.insert("hubbench-multi.jsonl".into(), cruda_core::dataset::to_jsonl(&multi));
    out.insert("scripts/planner.jsonl".into(), script_jsonl(&planner_script(&all)));
    out.insert("scripts/single.jsonl".into(), script_jsonl(&single_script(registry, &corpus.single)));
    out.insert("scripts/multi.jsonl".into(), script_jsonl(&decompose_script(registry, &corpus.multi)));
    out.insert("cost-model.toml".into(), model_prices.to_string());
    out
}

/// Prices used by the shipped fixtures. They are illustrative only.
pub const EXAMPLE_PRICES: &str = "\
# Prices in dollars per million tokens. Illustrative values; edit before
# comparing real providers.
[models.scripted]
input_per_million = 3.0
output_per_million = 15.0

[models.gpt-4o]
input_per_million = 2.5
output_per_million = 10.0

[models.claude-3-5-sonnet-20240620]
input_per_million = 3.0
output_per_million = 15.0
";
