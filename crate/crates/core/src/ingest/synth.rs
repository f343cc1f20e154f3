//! Desk-scale synthetic trial corpus.
//!
//! Records are drawn per disease area from templated phrase banks. Each area
//! keeps growing pools of criteria, endpoints and concepts; a new record
//! either reuses a pooled value or mints a new one, which yields realistic
//! sharing between trials. Titles and endpoints draw on the same area
//! vocabulary, so trials with similar titles have similar endpoints.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{ConceptRef, Intervention, StudyType, TrialRecord};
use crate::kg::content_hash;

/// Disease areas and their trial counts in the reference extraction.
pub const DISEASE_AREAS: [(&str, u32); 9] = [
    ("Asthma", 125),
    ("Cystic Fibrosis", 440),
    ("COPD (Chronic Obstructive Pulmonary Disease)", 183),
    ("Early Rheumatoid Arthritis", 159),
    ("Malignant Pleural Mesothelioma", 362),
    ("Non-Small Cell Lung Cancer", 694),
    ("Pulmonary Hypertension", 416),
    ("Systemic Lupus Erythematosus", 452),
    ("Tuberculosis", 370),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_trials: usize,
    /// Numeric part of the first generated registry id.
    pub first_id: u32,
    /// Each trial gets a single primary endpoint built from one area measure,
    /// and that measure is named in the title.
    #[serde(default)]
    pub forced_structure: bool,
}

impl SynthConfig {
    pub fn new(seed: u64, n_trials: usize) -> Self {
        SynthConfig {
            seed,
            n_trials,
            first_id: 1,
            forced_structure: false,
        }
    }
}

struct AreaBank {
    conditions: &'static [&'static str],
    drugs: &'static [&'static str],
    populations: &'static [&'static str],
    measures: &'static [&'static str],
    responses: &'static [&'static str],
    events: &'static [&'static str],
    biomarkers: &'static [&'static str],
    inclusion: &'static [&'static str],
    exclusion: &'static [&'static str],
    background_meds: &'static [&'static str],
}

const ASTHMA: AreaBank = AreaBank {
    conditions: &["asthma", "eosinophilic asthma", "allergic asthma", "exercise-induced bronchoconstriction"],
    drugs: &["mepolizumab", "benralizumab", "dupilumab", "tezepelumab", "budesonide formoterol", "fluticasone furoate", "tiotropium", "omalizumab"],
    populations: &["adults", "adolescents and adults", "children", "patients"],
    measures: &["pre-bronchodilator FEV1", "post-bronchodilator FEV1", "asthma control questionnaire score", "morning peak expiratory flow", "rescue medication use", "asthma quality of life questionnaire score", "fractional exhaled nitric oxide", "blood eosinophil count"],
    responses: &["well-controlled asthma", "a clinically meaningful ACQ improvement", "no severe exacerbation"],
    events: &["first severe asthma exacerbation", "loss of asthma control", "first asthma-related hospitalization"],
    biomarkers: &["periostin", "serum IgE", "sputum eosinophil", "exhaled nitric oxide"],
    inclusion: &[
        "physician-diagnosed asthma for at least {mo} months",
        "pre-bronchodilator FEV1 between {p} and {p2} percent of predicted",
        "at least {n} asthma exacerbations requiring systemic corticosteroids in the previous {mo} months",
        "blood eosinophil count of at least {eos} cells per microliter at screening",
        "ACQ-5 score of {acq} or higher at screening",
        "reversibility of at least {rev} percent in FEV1 after salbutamol",
    ],
    exclusion: &[
        "current smoker or smoking history of more than {py} pack-years",
        "asthma exacerbation within {w} weeks before screening",
        "clinically significant lung disease other than asthma",
        "treatment with a biologic for asthma within {mo} months",
    ],
    background_meds: &["inhaled corticosteroids", "long-acting beta agonists", "oral corticosteroids", "leukotriene receptor antagonists"],
};

const CYSTIC_FIBROSIS: AreaBank = AreaBank {
    conditions: &["cystic fibrosis", "cystic fibrosis lung disease", "pseudomonas aeruginosa infection in cystic fibrosis", "cystic fibrosis related diabetes"],
    drugs: &["ivacaftor", "lumacaftor ivacaftor", "tezacaftor ivacaftor", "elexacaftor tezacaftor ivacaftor", "dornase alfa", "inhaled tobramycin", "aztreonam lysine", "hypertonic saline"],
    populations: &["subjects", "children", "patients aged 12 years and older", "adults"],
    measures: &["percent predicted FEV1", "sweat chloride concentration", "CFQ-R respiratory domain score", "body mass index z-score", "lung clearance index", "pulmonary exacerbation rate", "pseudomonas aeruginosa sputum density", "weight gain"],
    responses: &["sweat chloride below 60 mmol/L", "an absolute FEV1 improvement of at least 5 points", "sputum culture conversion"],
    events: &["first pulmonary exacerbation", "first intravenous antibiotic course", "pseudomonas recurrence"],
    biomarkers: &["sputum neutrophil elastase", "fecal elastase", "immunoreactive trypsinogen", "serum calprotectin"],
    inclusion: &[
        "confirmed diagnosis of cystic fibrosis with sweat chloride of at least {sc} mmol/L",
        "at least one {mut} mutation in the CFTR gene",
        "percent predicted FEV1 between {p} and {p2} at screening",
        "stable cystic fibrosis lung disease for at least {w} weeks",
        "chronic pseudomonas aeruginosa colonization with at least {n} positive cultures in the past {mo} months",
    ],
    exclusion: &[
        "history of solid organ transplantation",
        "acute upper or lower respiratory infection within {w} weeks of day 1",
        "colonization with burkholderia cenocepacia or mycobacterium abscessus",
        "use of a CFTR modulator within {w} weeks before screening",
    ],
    background_meds: &["CFTR modulators", "inhaled antibiotics", "dornase alfa", "chronic azithromycin"],
};

const COPD: AreaBank = AreaBank {
    conditions: &["chronic obstructive pulmonary disease", "emphysema", "chronic bronchitis", "COPD exacerbation"],
    drugs: &["umeclidinium vilanterol", "glycopyrronium formoterol", "roflumilast", "ensifentrine", "tiotropium olodaterol", "fluticasone umeclidinium vilanterol", "indacaterol", "aclidinium"],
    populations: &["patients", "subjects", "former smokers", "adults"],
    measures: &["trough FEV1", "St George's Respiratory Questionnaire total score", "transition dyspnea index", "COPD assessment test score", "six minute walk distance", "rate of moderate or severe exacerbations", "inspiratory capacity", "rescue albuterol use"],
    responses: &["a clinically important SGRQ improvement", "a TDI focal score of at least 1 unit", "no moderate or severe exacerbation"],
    events: &["first moderate or severe COPD exacerbation", "clinically important deterioration", "COPD-related hospitalization"],
    biomarkers: &["fibrinogen", "blood eosinophil", "C-reactive protein", "surfactant protein D"],
    inclusion: &[
        "established clinical history of COPD for at least {mo} months",
        "post-bronchodilator FEV1/FVC ratio below 0.70 and FEV1 between {p} and {p2} percent predicted",
        "current or former smoker with at least {py} pack-years",
        "at least {n} moderate or severe exacerbations in the previous year",
        "mMRC dyspnea grade of {n} or higher",
    ],
    exclusion: &[
        "current diagnosis of asthma",
        "alpha-1 antitrypsin deficiency",
        "lung volume reduction surgery within {mo} months",
        "long-term oxygen therapy for more than {n} hours per day",
    ],
    background_meds: &["long-acting muscarinic antagonists", "inhaled corticosteroids", "phosphodiesterase-4 inhibitors", "long-acting beta agonists"],
};

const RHEUMATOID: AreaBank = AreaBank {
    conditions: &["early rheumatoid arthritis", "rheumatoid arthritis", "undifferentiated arthritis", "seropositive rheumatoid arthritis"],
    drugs: &["methotrexate", "tofacitinib", "baricitinib", "upadacitinib", "adalimumab", "etanercept", "abatacept", "tocilizumab"],
    populations: &["patients", "adults", "DMARD-naive patients", "subjects"],
    measures: &["DAS28-CRP", "clinical disease activity index", "HAQ-DI score", "modified total sharp score", "swollen joint count", "tender joint count", "patient global assessment of disease activity", "morning stiffness duration"],
    responses: &["ACR20 response", "ACR50 response", "ACR70 response", "DAS28-CRP remission", "boolean remission"],
    events: &["first disease flare", "radiographic progression", "treatment failure"],
    biomarkers: &["anti-CCP antibody", "rheumatoid factor", "C-reactive protein", "interleukin-6"],
    inclusion: &[
        "diagnosis of rheumatoid arthritis according to the 2010 ACR/EULAR criteria with symptom duration of less than {mo} months",
        "at least {j} swollen joints and {j} tender joints at screening",
        "C-reactive protein of at least {crp} mg/L",
        "positive for anti-CCP antibody or rheumatoid factor",
        "naive to methotrexate or received no more than {n} doses",
    ],
    exclusion: &[
        "prior treatment with a biologic DMARD",
        "history of inflammatory joint disease other than rheumatoid arthritis",
        "intra-articular corticosteroid injection within {w} weeks",
        "active or latent tuberculosis without adequate treatment",
    ],
    background_meds: &["methotrexate", "oral glucocorticoids", "hydroxychloroquine", "sulfasalazine"],
};

const MESOTHELIOMA: AreaBank = AreaBank {
    conditions: &["malignant pleural mesothelioma", "epithelioid mesothelioma", "unresectable mesothelioma", "sarcomatoid mesothelioma"],
    drugs: &["nivolumab ipilimumab", "pemetrexed cisplatin", "bevacizumab", "pembrolizumab", "durvalumab", "tremelimumab", "vinorelbine", "defactinib"],
    populations: &["patients", "previously treated patients", "chemotherapy-naive patients", "subjects"],
    measures: &["objective response rate by modified RECIST", "disease control rate", "lung cancer symptom scale for mesothelioma score", "tumour volume", "pain score"],
    responses: &["an objective response per mRECIST", "disease control at 12 weeks", "a partial response"],
    events: &["death from any cause", "disease progression or death", "treatment failure", "symptomatic deterioration"],
    biomarkers: &["mesothelin", "fibulin-3", "PD-L1 expression", "BAP1 loss"],
    inclusion: &[
        "histologically confirmed malignant pleural mesothelioma not amenable to curative surgery",
        "measurable disease per modified RECIST for mesothelioma",
        "ECOG performance status of {ecog}",
        "no more than {n} prior lines of systemic therapy",
        "adequate tumour tissue available for PD-L1 testing",
    ],
    exclusion: &[
        "primitive peritoneal, pericardial or tunica vaginalis mesothelioma",
        "prior treatment with an anti-PD-1 or anti-PD-L1 antibody",
        "radiotherapy to the chest within {w} weeks",
        "symptomatic brain metastases",
    ],
    background_meds: &["platinum-based chemotherapy", "pemetrexed", "systemic corticosteroids", "immunosuppressive agents"],
};

const NSCLC: AreaBank = AreaBank {
    conditions: &["non-small cell lung cancer", "advanced non-small cell lung cancer", "EGFR mutated non-small cell lung cancer", "squamous non-small cell lung cancer"],
    drugs: &["osimertinib", "pembrolizumab", "atezolizumab", "docetaxel", "carboplatin paclitaxel", "alectinib", "lorlatinib", "sotorasib"],
    populations: &["patients", "previously untreated patients", "subjects", "patients with brain metastases"],
    measures: &["objective response rate per RECIST 1.1", "duration of response", "disease control rate", "EORTC QLQ-LC13 score", "intracranial response rate", "circulating tumor DNA level"],
    responses: &["a confirmed objective response per RECIST 1.1", "a complete response", "a major pathological response"],
    events: &["death from any cause", "disease progression per RECIST 1.1 or death", "central nervous system progression", "deterioration of lung cancer symptoms"],
    biomarkers: &["PD-L1 tumour proportion score", "tumour mutational burden", "EGFR T790M", "ALK rearrangement"],
    inclusion: &[
        "histologically or cytologically documented stage {stage} non-small cell lung cancer",
        "at least one measurable lesion per RECIST 1.1",
        "documented {mut2} mutation or rearrangement",
        "ECOG performance status of {ecog}",
        "disease progression after {n} prior platinum-based regimens",
    ],
    exclusion: &[
        "small cell or mixed small cell lung cancer histology",
        "untreated or symptomatic central nervous system metastases",
        "history of interstitial lung disease or pneumonitis requiring steroids",
        "prior therapy with a {drug_class} inhibitor",
    ],
    background_meds: &["platinum doublet chemotherapy", "immune checkpoint inhibitors", "tyrosine kinase inhibitors", "systemic corticosteroids"],
};

const PAH: AreaBank = AreaBank {
    conditions: &["pulmonary arterial hypertension", "pulmonary hypertension", "chronic thromboembolic pulmonary hypertension", "pulmonary hypertension due to interstitial lung disease"],
    drugs: &["macitentan", "ambrisentan", "bosentan", "riociguat", "selexipag", "treprostinil", "sildenafil", "sotatercept"],
    populations: &["patients", "adults", "subjects", "children"],
    measures: &["six minute walk distance", "pulmonary vascular resistance", "NT-proBNP", "mean pulmonary arterial pressure", "cardiac index", "WHO functional class", "Borg dyspnea index"],
    responses: &["improvement in WHO functional class", "a six minute walk distance increase of at least 30 m", "low risk status"],
    events: &["clinical worsening", "first morbidity or mortality event", "hospitalization for pulmonary hypertension", "death or lung transplantation"],
    biomarkers: &["NT-proBNP", "troponin T", "growth differentiation factor 15", "endothelin-1"],
    inclusion: &[
        "pulmonary arterial hypertension confirmed by right heart catheterization with mean pulmonary arterial pressure of at least {mpap} mmHg",
        "pulmonary vascular resistance of at least {pvr} Wood units",
        "six minute walk distance between {smwd} and 450 m",
        "WHO functional class {who}",
        "stable PAH-specific therapy for at least {w} weeks",
    ],
    exclusion: &[
        "pulmonary hypertension due to left heart disease",
        "systolic blood pressure below {sbp} mmHg",
        "moderate or severe obstructive lung disease",
        "hemoglobin below {hb} g/dL at screening",
    ],
    background_meds: &["endothelin receptor antagonists", "phosphodiesterase-5 inhibitors", "prostacyclin analogues", "soluble guanylate cyclase stimulators"],
};

const LUPUS: AreaBank = AreaBank {
    conditions: &["systemic lupus erythematosus", "lupus nephritis", "cutaneous lupus erythematosus", "active systemic lupus erythematosus"],
    drugs: &["belimumab", "anifrolumab", "voclosporin", "obinutuzumab", "hydroxychloroquine", "mycophenolate mofetil", "deucravacitinib", "rituximab"],
    populations: &["patients", "adults", "subjects", "patients with active disease"],
    measures: &["SLEDAI-2K score", "BILAG index", "CLASI activity score", "urine protein to creatinine ratio", "estimated glomerular filtration rate", "physician global assessment", "oral corticosteroid dose"],
    responses: &["an SRI-4 response", "a BICLA response", "complete renal response", "lupus low disease activity state"],
    events: &["first severe flare", "renal flare", "treatment failure", "doubling of serum creatinine"],
    biomarkers: &["anti-dsDNA antibody", "complement C3", "complement C4", "type I interferon gene signature"],
    inclusion: &[
        "diagnosis of SLE meeting the 2019 EULAR/ACR classification criteria",
        "SLEDAI-2K score of at least {sledai} at screening",
        "positive antinuclear antibody titer of at least 1:{ana}",
        "biopsy-proven class {ln} lupus nephritis",
        "stable standard of care therapy for at least {w} weeks",
    ],
    exclusion: &[
        "active severe central nervous system lupus",
        "receipt of a B cell depleting therapy within {mo} months",
        "estimated glomerular filtration rate below {egfr} mL/min",
        "history of antiphospholipid syndrome with thrombosis",
    ],
    background_meds: &["antimalarials", "oral corticosteroids", "immunosuppressants", "mycophenolate"],
};

const TUBERCULOSIS: AreaBank = AreaBank {
    conditions: &["pulmonary tuberculosis", "multidrug-resistant tuberculosis", "latent tuberculosis infection", "drug-susceptible tuberculosis"],
    drugs: &["bedaquiline", "pretomanid", "linezolid", "rifapentine", "isoniazid", "moxifloxacin", "delamanid", "high-dose rifampicin"],
    populations: &["adults", "patients", "household contacts", "people living with HIV"],
    measures: &["time to sputum culture conversion", "early bactericidal activity", "sputum colony forming units", "time to positivity in liquid culture", "QT interval", "treatment completion"],
    responses: &["sputum culture conversion at week 8", "a favourable treatment outcome", "relapse-free cure"],
    events: &["unfavourable outcome", "treatment failure or relapse", "culture conversion", "incident active tuberculosis"],
    biomarkers: &["interferon gamma release", "lipoarabinomannan", "mycobacterial load", "drug exposure"],
    inclusion: &[
        "sputum smear positive for acid-fast bacilli",
        "rifampicin-resistant tuberculosis confirmed by molecular testing",
        "body weight of at least {kg} kg",
        "chest radiograph consistent with pulmonary tuberculosis",
        "documented HIV status with CD4 count above {cd4} cells per microliter if positive",
    ],
    exclusion: &[
        "tuberculous meningitis or other extrapulmonary tuberculosis",
        "more than {n} days of tuberculosis treatment in the past {mo} months",
        "QTcF interval above {qt} ms at screening",
        "peripheral neuropathy of grade {grade} or higher",
    ],
    background_meds: &["rifamycins", "fluoroquinolones", "antiretroviral therapy", "isoniazid preventive therapy"],
};

const BANKS: [&AreaBank; 9] = [
    &ASTHMA,
    &CYSTIC_FIBROSIS,
    &COPD,
    &RHEUMATOID,
    &MESOTHELIOMA,
    &NSCLC,
    &PAH,
    &LUPUS,
    &TUBERCULOSIS,
];

const PEP_TEMPLATES: &[&str] = &[
    "change from baseline in {m} at week {w}",
    "{m} at week {w}",
    "mean change in {m} from baseline to week {w}",
    "percentage of participants with {r} at week {w}",
    "time to {e}",
    "proportion of participants free of {e} at month {mo}",
    "absolute change in {m} through week {w}",
];

const SEP_EXTRA: &[&str] = &[
    "number of participants with treatment-emergent adverse events through week {w}",
    "incidence of {ae} up to week {w}",
    "maximum plasma concentration of {d} on day {dd}",
    "area under the concentration-time curve of {d} at week {w}",
    "change from baseline in {m} at day {dd}",
    "number of participants with clinically significant laboratory abnormalities at week {w}",
    "annualized rate of {e} over {mo} months",
];

const OEP_TEMPLATES: &[&str] = &[
    "exploratory change in {bm} levels at week {w}",
    "pharmacokinetic exposure of {d} in {pop}",
    "health care resource utilization over {mo} months",
    "anti-drug antibodies against {d} through week {w}",
    "correlation between baseline {bm} and {m} at week {w}",
];

const ICR_TEMPLATES: &[&str] = &[
    "male or female aged {a} to {b} years at the time of consent",
    "diagnosis of {c} for at least {mo} months prior to screening",
    "stable dose of {bg} for at least {w} weeks before randomization",
    "body mass index between {bmi} kg/m2",
    "women of childbearing potential must use highly effective contraception for {w} weeks after the last dose",
    "life expectancy of at least {mo} months",
    "adequate hepatic function with bilirubin no greater than {x} times the upper limit of normal",
    "able to perform {m} measurements at screening",
];

const ECR_TEMPLATES: &[&str] = &[
    "pregnant or breastfeeding women",
    "participation in another interventional clinical trial within {w} weeks",
    "history of {comorb} within {mo} months before screening",
    "treatment with {bg} within {w} weeks of screening",
    "known hypersensitivity to {d} or any of its excipients",
    "active {infection} infection requiring systemic therapy within {w} weeks",
    "alanine aminotransferase greater than {x} times the upper limit of normal",
    "estimated glomerular filtration rate below {egfr} mL/min/1.73 m2",
    "history of malignancy within {yr} years except treated basal cell carcinoma",
    "live vaccine within {w} weeks before the first dose",
];

const QUALIFIERS: &[&str] = &[
    "as assessed by the investigator at visit {visit}",
    "per protocol amendment {n}",
    "in the intention-to-treat population at week {w}",
    "confirmed at a second visit within {w} weeks",
    "documented in the medical record within the past {mo} months",
    "at the screening visit or within {dd} days before it",
    "during the {w}-week run-in period",
    "according to local guidelines in force for {mo} months",
    "by central laboratory within {dd} days",
    "in the per-protocol set through week {w}",
    "at visit {visit}",
    "as recorded in the electronic diary over {dd} days",
    "measured after a {fast}-hour fast",
    "adjusted for the baseline value at visit {visit}",
    "using a mixed model for repeated measures to week {w}",
    "in participants aged {a} years or older",
    "compared with placebo over {w} weeks",
    "compared with standard of care over {mo} months",
    "at the end of the {w}-week treatment period",
    "relative to day {dd}",
];

const DESIGNS: &[&str] = &[
    "A Randomized, Double-Blind, Placebo-Controlled Study of",
    "An Open-Label Study of",
    "A Phase 2 Study of",
    "A Phase 3, Multicenter Trial of",
    "Efficacy and Safety of",
    "A Dose-Ranging Study of",
    "Long-Term Safety of",
    "A Pilot Study of",
    "Evaluation of",
];

const ADVERSE_EVENTS: &[&str] = &["serious adverse events", "infusion-related reactions", "hepatotoxicity", "injection site reactions", "grade 3 or higher adverse events", "QT prolongation"];
const COMORBIDITIES: &[&str] = &["myocardial infarction", "stroke", "unstable angina", "major surgery", "alcohol or drug abuse", "hospitalization for heart failure", "uncontrolled hypertension"];
const INFECTIONS: &[&str] = &["bacterial", "viral", "fungal", "hepatitis B", "hepatitis C", "herpes zoster"];
const DRUG_CLASSES: &[&str] = &["EGFR", "ALK", "KRAS G12C", "MET", "PD-1"];
const MUTATIONS: &[&str] = &["F508del", "gating", "residual function", "minimal function"];
const DRIVER_MUTATIONS: &[&str] = &["EGFR exon 19 deletion or L858R", "ALK", "ROS1", "KRAS G12C", "MET exon 14 skipping"];

const CONDITION_MODIFIERS: &[&str] = &["moderate", "severe", "mild", "persistent", "uncontrolled", "refractory", "recurrent", "early onset", "late onset", "steroid dependent", "progressive", "newly diagnosed", "pediatric", "stable"];

const TARGET_FAMILIES: &[&str] = &["IL-", "JAK", "CD", "TNF receptor ", "FGFR", "PDGFR", "CCR", "TLR", "P2X", "KCN", "HDAC", "CYP", "ABCB", "PI3K", "MMP", "VEGFR", "CXCR", "TRPV"];
const MOA_ACTIONS: &[&str] = &["inhibitor", "antagonist", "agonist", "blocker", "modulator", "antibody", "partial agonist", "degrader", "potentiator", "corrector"];
const CODE_PREFIXES: &[&str] = &["AZD", "GSK", "BMS-", "LY", "MK-", "PF-0", "RO", "ABBV-", "JNJ-", "VX-", "BAY ", "TAK-"];

const PHASES: &[(&str, u32)] = &[
    ("Early Phase 1", 2),
    ("Phase 1", 15),
    ("Phase 1/Phase 2", 8),
    ("Phase 2", 30),
    ("Phase 2/Phase 3", 4),
    ("Phase 3", 28),
    ("Phase 4", 12),
    ("Not Applicable", 1),
];

const STATUSES: &[(&str, u32)] = &[
    ("Completed", 55),
    ("Terminated", 10),
    ("Withdrawn", 3),
    ("Recruiting", 14),
    ("Active, not recruiting", 7),
    ("Not yet recruiting", 3),
    ("Unknown status", 5),
    ("Suspended", 1),
    ("Enrolling by invitation", 2),
];

const AGE_GROUPS: &[(&[&str], u32)] = &[
    (&["Adult", "Older Adult"], 60),
    (&["Adult"], 12),
    (&["Child", "Adult", "Older Adult"], 14),
    (&["Child"], 7),
    (&["Child", "Adult"], 5),
    (&["Older Adult"], 2),
];

const COUNTRIES: &[&str] = &[
    "United States", "Germany", "United Kingdom", "France", "Spain", "Italy", "Canada", "Poland", "Netherlands",
    "Belgium", "Australia", "Japan", "China", "Korea, Republic of", "Russian Federation", "Czechia", "Hungary",
    "Argentina", "Brazil", "Mexico", "South Africa", "Israel", "Sweden", "Denmark", "Austria", "Switzerland",
    "Ireland", "Bulgaria", "Romania", "Ukraine", "Turkey", "Taiwan", "India", "New Zealand", "Chile", "Peru",
    "Colombia", "Greece", "Portugal", "Norway", "Finland", "Slovakia", "Lithuania", "Latvia", "Estonia",
    "Serbia", "Croatia", "Slovenia", "Belarus", "Georgia", "Philippines", "Thailand", "Malaysia", "Singapore",
    "Vietnam", "Hong Kong", "Egypt", "Tunisia", "Morocco", "Kenya", "Uganda", "Tanzania", "Malawi", "Zambia",
    "Zimbabwe", "Nigeria", "Ghana", "Mozambique", "Botswana", "Lesotho", "Ethiopia", "Pakistan", "Bangladesh",
    "Indonesia", "Puerto Rico", "Guatemala", "Panama", "Dominican Republic", "Costa Rica", "Ecuador",
    "Venezuela", "Uruguay", "Paraguay", "Bolivia", "Saudi Arabia", "United Arab Emirates", "Qatar", "Kuwait",
    "Lebanon", "Jordan", "Iran, Islamic Republic of", "Kazakhstan", "Uzbekistan", "Kyrgyzstan", "Armenia",
    "Azerbaijan", "Moldova, Republic of", "Bosnia and Herzegovina", "North Macedonia", "Albania", "Iceland",
    "Luxembourg", "Malta", "Cyprus", "Haiti", "Honduras", "El Salvador", "Nicaragua", "Cambodia", "Mongolia",
    "Nepal", "Sri Lanka", "Myanmar", "Rwanda", "Cameroon",
];

/// Rounded integer with the given mean, drawn uniformly over a small range.
fn count_between<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

fn weighted<'a, T, R: Rng>(rng: &mut R, items: &'a [(T, u32)]) -> &'a T {
    let total: u32 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen_range(0..total);
    for (item, w) in items {
        if x < *w {
            return item;
        }
        x -= w;
    }
    &items[items.len() - 1].0
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

/// Concept identifier derived from the name so a name always maps to the
/// same concept; roughly a quarter of names have none.
fn pseudo_cui(name: &str) -> Option<String> {
    let h = content_hash(&name.to_lowercase());
    let v = u64::from_str_radix(&h[..12], 16).expect("hex");
    (v % 4 != 0).then(|| format!("C{:07}", v % 10_000_000))
}

struct Pools {
    texts: [Vec<String>; 5],
    conditions: Vec<String>,
    interventions: Vec<usize>,
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    pools: Vec<Pools>,
    catalog: Vec<Intervention>,
    targets: Vec<String>,
    moas: Vec<String>,
    bank: &'a [&'a AreaBank; 9],
    forced: bool,
}

// Pool slots: ICR, ECR, PEP, SEP, OEP.
const ICR: usize = 0;
const ECR: usize = 1;
const PEP: usize = 2;
const SEP: usize = 3;
const OEP: usize = 4;
const REUSE: f64 = 0.12;

impl Generator<'_> {
    fn fill(&mut self, template: &str, area: usize, drug: &str, condition: &str) -> String {
        let bank = self.bank[area];
        let mut out = String::with_capacity(template.len() + 32);
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let end = rest[start..].find('}').expect("closed slot") + start;
            let key = &rest[start + 1..end];
            let rng = &mut self.rng;
            let value: String = match key {
                "m" => pick(rng, bank.measures).to_string(),
                "r" => pick(rng, bank.responses).to_string(),
                "e" => pick(rng, bank.events).to_string(),
                "bm" => pick(rng, bank.biomarkers).to_string(),
                "bg" => pick(rng, bank.background_meds).to_string(),
                "pop" => pick(rng, bank.populations).to_string(),
                "d" => drug.to_string(),
                "c" => condition.to_string(),
                "w" => pick(rng, &["2", "4", "6", "8", "12", "16", "20", "24", "26", "28", "36", "48", "52", "56", "72", "96"]).to_string(),
                "mo" => pick(rng, &["1", "2", "3", "6", "9", "12", "18", "24", "36", "60"]).to_string(),
                "dd" => pick(rng, &["1", "7", "14", "15", "28", "29", "56", "84", "90", "180"]).to_string(),
                "yr" => pick(rng, &["2", "3", "5", "10"]).to_string(),
                "a" => pick(rng, &["12", "18", "20", "30", "40", "50"]).to_string(),
                "b" => pick(rng, &["45", "55", "60", "65", "70", "75", "80", "85"]).to_string(),
                "p" => pick(rng, &["25", "30", "40", "50"]).to_string(),
                "p2" => pick(rng, &["70", "80", "85", "90", "100"]).to_string(),
                "n" => rng.gen_range(1..=4).to_string(),
                "j" => pick(rng, &["4", "6", "8"]).to_string(),
                "x" => pick(rng, &["1.5", "2", "2.5", "3", "5"]).to_string(),
                "bmi" => pick(rng, &["18 and 30", "18.5 and 32", "17 and 35", "19 and 40"]).to_string(),
                "egfr" => pick(rng, &["30", "45", "60"]).to_string(),
                "ae" => pick(rng, ADVERSE_EVENTS).to_string(),
                "comorb" => pick(rng, COMORBIDITIES).to_string(),
                "infection" => pick(rng, INFECTIONS).to_string(),
                "mo_range" => pick(rng, &["3", "6", "12"]).to_string(),
                "eos" => pick(rng, &["150", "300", "400"]).to_string(),
                "acq" => pick(rng, &["1.5", "2.0"]).to_string(),
                "rev" => pick(rng, &["12", "15"]).to_string(),
                "py" => pick(rng, &["10", "15", "20"]).to_string(),
                "sc" => pick(rng, &["60"]).to_string(),
                "mut" => pick(rng, MUTATIONS).to_string(),
                "mut2" => pick(rng, DRIVER_MUTATIONS).to_string(),
                "drug_class" => pick(rng, DRUG_CLASSES).to_string(),
                "crp" => pick(rng, &["6", "10", "15"]).to_string(),
                "ecog" => pick(rng, &["0 or 1", "0 to 2"]).to_string(),
                "stage" => pick(rng, &["IIIB", "IIIB or IV", "IV", "IB to IIIA"]).to_string(),
                "mpap" => pick(rng, &["20", "25"]).to_string(),
                "pvr" => pick(rng, &["3", "4", "5"]).to_string(),
                "smwd" => pick(rng, &["150", "100"]).to_string(),
                "who" => pick(rng, &["II or III", "II to IV", "III"]).to_string(),
                "sbp" => pick(rng, &["90", "95"]).to_string(),
                "hb" => pick(rng, &["9", "10"]).to_string(),
                "sledai" => pick(rng, &["4", "6", "8"]).to_string(),
                "ana" => pick(rng, &["80", "160"]).to_string(),
                "ln" => pick(rng, &["III", "IV", "III or IV", "V"]).to_string(),
                "kg" => pick(rng, &["30", "35", "40"]).to_string(),
                "cd4" => pick(rng, &["100", "200", "350"]).to_string(),
                "qt" => pick(rng, &["450", "470", "500"]).to_string(),
                "grade" => pick(rng, &["2", "3"]).to_string(),
                "visit" => rng.gen_range(1..=12).to_string(),
                "fast" => pick(rng, &["4", "8", "10", "12"]).to_string(),
                other => panic!("unknown template slot {{{other}}}"),
            };
            out.push_str(&value);
            rest = &rest[end + 1..];
        }
        out.push_str(rest);
        out
    }

    fn text_for(&mut self, slot: usize, area: usize, drug: &str, condition: &str) -> String {
        let pool_len = self.pools[area].texts[slot].len();
        if pool_len > 0 && self.rng.gen_bool(REUSE) {
            let i = self.rng.gen_range(0..pool_len);
            return self.pools[area].texts[slot][i].clone();
        }
        let bank = self.bank[area];
        let template = match slot {
            ICR => {
                if self.rng.gen_bool(0.5) {
                    pick(&mut self.rng, bank.inclusion)
                } else {
                    pick(&mut self.rng, ICR_TEMPLATES)
                }
            }
            ECR => {
                if self.rng.gen_bool(0.4) {
                    pick(&mut self.rng, bank.exclusion)
                } else {
                    pick(&mut self.rng, ECR_TEMPLATES)
                }
            }
            PEP => pick(&mut self.rng, PEP_TEMPLATES),
            SEP => {
                if self.rng.gen_bool(0.6) {
                    pick(&mut self.rng, PEP_TEMPLATES)
                } else {
                    pick(&mut self.rng, SEP_EXTRA)
                }
            }
            _ => pick(&mut self.rng, OEP_TEMPLATES),
        };
        // Qualifiers widen the phrase space so independent mints rarely collide.
        let mut text = self.fill(template, area, drug, condition);
        let first = pick(&mut self.rng, QUALIFIERS);
        {
            let q = self.fill(first, area, drug, condition);
            text = format!("{text} {q}");
            let second = pick(&mut self.rng, QUALIFIERS);
            if second != first && self.rng.gen_bool(0.7) {
                let q = self.fill(second, area, drug, condition);
                text = format!("{text}, {q}");
            }
        }
        self.pools[area].texts[slot].push(text.clone());
        text
    }

    fn condition(&mut self, area: usize) -> String {
        let pool_len = self.pools[area].conditions.len();
        if pool_len > 0 && !self.rng.gen_bool(0.27) {
            let i = self.rng.gen_range(0..pool_len);
            return self.pools[area].conditions[i].clone();
        }
        let bank = self.bank[area];
        let base = pick(&mut self.rng, bank.conditions);
        let name = if pool_len < bank.conditions.len() {
            // Seed the pool with the plain condition names first.
            bank.conditions[pool_len].to_string()
        } else if self.rng.gen_bool(0.5) {
            format!("{} {}", pick(&mut self.rng, CONDITION_MODIFIERS), base)
        } else {
            let a = pick(&mut self.rng, CONDITION_MODIFIERS);
            let b = pick(&mut self.rng, CONDITION_MODIFIERS);
            format!("{a} {b} {base}")
        };
        self.pools[area].conditions.push(name.clone());
        name
    }

    fn target(&mut self) -> String {
        if !self.targets.is_empty() && !self.rng.gen_bool(0.45) {
            let i = self.rng.gen_range(0..self.targets.len());
            return self.targets[i].clone();
        }
        let name = format!("{}{}", pick(&mut self.rng, TARGET_FAMILIES), self.rng.gen_range(1..120));
        self.targets.push(name.clone());
        name
    }

    fn moa(&mut self, targets: &[String]) -> String {
        if !self.moas.is_empty() && !self.rng.gen_bool(0.41) {
            let i = self.rng.gen_range(0..self.moas.len());
            return self.moas[i].clone();
        }
        let base = match targets.choose(&mut self.rng) {
            Some(t) => t.clone(),
            None => self.target(),
        };
        let name = format!("{} {}", base, pick(&mut self.rng, MOA_ACTIONS));
        self.moas.push(name.clone());
        name
    }

    fn intervention(&mut self, area: usize) -> Intervention {
        let pool_len = self.pools[area].interventions.len();
        if pool_len > 0 && !self.rng.gen_bool(0.25) {
            let i = self.rng.gen_range(0..pool_len);
            return self.catalog[self.pools[area].interventions[i]].clone();
        }
        let bank = self.bank[area];
        let name = if pool_len < bank.drugs.len() {
            bank.drugs[pool_len].to_string()
        } else {
            format!("{}{}", pick(&mut self.rng, CODE_PREFIXES), self.rng.gen_range(1000..10000))
        };
        let mut iv = Intervention {
            concept_id: pseudo_cui(&name).filter(|_| pool_len < bank.drugs.len()),
            name,
            targets: Vec::new(),
            moas: Vec::new(),
        };
        if self.rng.gen_bool(0.35) {
            let mut targets = BTreeSet::new();
            for _ in 0..*weighted(&mut self.rng, &[(1usize, 35), (2, 35), (3, 30)]) {
                targets.insert(self.target());
            }
            let targets: Vec<String> = targets.into_iter().collect();
            let mut moas = BTreeSet::new();
            for _ in 0..count_between(&mut self.rng, 1, 4) {
                moas.insert(self.moa(&targets));
            }
            iv.targets = targets.into_iter().map(|t| ConceptRef::new(t, None)).collect();
            iv.moas = moas.into_iter().map(|m| ConceptRef::new(m, None)).collect();
        }
        self.catalog.push(iv.clone());
        self.pools[area].interventions.push(self.catalog.len() - 1);
        iv
    }

    fn record(&mut self, nct_id: String) -> TrialRecord {
        let weights: Vec<(usize, u32)> = DISEASE_AREAS.iter().enumerate().map(|(i, (_, w))| (i, *w)).collect();
        let area = *weighted(&mut self.rng, &weights);

        let n_cond = *weighted(&mut self.rng, &[(1usize, 40), (2, 35), (3, 25)]);
        let mut conditions: Vec<ConceptRef> = Vec::new();
        for _ in 0..n_cond {
            let name = self.condition(area);
            if conditions.iter().all(|c| c.name != name) {
                let cui = pseudo_cui(&name);
                conditions.push(ConceptRef {
                    name,
                    concept_id: cui,
                });
            }
        }
        let n_int = *weighted(&mut self.rng, &[(1usize, 40), (2, 40), (3, 20)]);
        let mut interventions: Vec<Intervention> = Vec::new();
        for _ in 0..n_int {
            let iv = self.intervention(area);
            if interventions.iter().all(|x| x.name != iv.name) {
                interventions.push(iv);
            }
        }
        let drug = interventions[0].name.clone();
        let condition = conditions[0].name.clone();

        let population = pick(&mut self.rng, self.bank[area].populations);
        let design = pick(&mut self.rng, DESIGNS);
        let mut brief_title = format!("{design} {} in {population} with {}", title_case(&drug), title_case(&condition));
        let forced_measure = self.forced.then(|| pick(&mut self.rng, self.bank[area].measures));

        let texts = |slot: usize, n: usize, g: &mut Self| -> Vec<String> {
            (0..n).map(|_| g.text_for(slot, area, &drug, &condition)).collect()
        };
        let n_icr = count_between(&mut self.rng, 3, 12);
        let inclusion_criteria = texts(ICR, n_icr, self);
        let n_ecr = count_between(&mut self.rng, 4, 17);
        let exclusion_criteria = texts(ECR, n_ecr, self);
        let n_pep = *weighted(&mut self.rng, &[(1usize, 45), (2, 40), (3, 15)]);
        let mut primary_endpoints = texts(PEP, n_pep, self);
        let n_sep = count_between(&mut self.rng, 2, 9);
        let secondary_endpoints = texts(SEP, n_sep, self);
        if let Some(m) = forced_measure {
            brief_title = format!("{design} {} on {m} in {}", title_case(&drug), title_case(&condition));
            primary_endpoints = vec![format!("change from baseline in {m} at week 12")];
        }
        let n_oep = if self.rng.gen_bool(0.15) { count_between(&mut self.rng, 1, 3) } else { 0 };
        let other_endpoints = texts(OEP, n_oep, self);

        let mut intervention_types: BTreeSet<String> = ["Drug".to_string()].into();
        if self.rng.gen_bool(0.1) {
            intervention_types.insert("Biological".into());
        }
        if self.rng.gen_bool(0.05) {
            intervention_types.insert("Procedure".into());
        }

        let n_cnt = count_between(&mut self.rng, 1, 5);
        let mut countries: Vec<String> = Vec::new();
        for _ in 0..n_cnt {
            // Skewed towards the head of the list.
            let u: f64 = self.rng.gen();
            let i = ((u * u * u) * COUNTRIES.len() as f64) as usize;
            let c = COUNTRIES[i.min(COUNTRIES.len() - 1)].to_string();
            if !countries.contains(&c) {
                countries.push(c);
            }
        }

        let gender = if self.rng.gen_bool(0.002) {
            String::new()
        } else {
            weighted(&mut self.rng, &[("All", 90u32), ("Female", 6), ("Male", 4)]).to_string()
        };

        TrialRecord {
            nct_id,
            brief_title,
            study_type: StudyType::Interventional,
            intervention_types,
            phase: weighted(&mut self.rng, PHASES).to_string(),
            overall_status: weighted(&mut self.rng, STATUSES).to_string(),
            gender,
            age_groups: weighted(&mut self.rng, AGE_GROUPS).iter().map(|s| s.to_string()).collect(),
            countries,
            conditions,
            interventions,
            inclusion_criteria,
            exclusion_criteria,
            primary_endpoints,
            secondary_endpoints,
            other_endpoints,
            disease_area: DISEASE_AREAS[area].0.to_string(),
        }
    }
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) if w.chars().all(|ch| ch.is_lowercase() || !ch.is_alphabetic()) => {
                    f.to_uppercase().chain(c).collect()
                }
                _ => w.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates `config.n_trials` records deterministically from `config.seed`.
pub fn generate_with(config: &SynthConfig) -> Vec<TrialRecord> {
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        pools: (0..BANKS.len())
            .map(|_| Pools {
                texts: Default::default(),
                conditions: Vec::new(),
                interventions: Vec::new(),
            })
            .collect(),
        catalog: Vec::new(),
        targets: Vec::new(),
        moas: Vec::new(),
        bank: &BANKS,
        forced: config.forced_structure,
    };
    (0..config.n_trials)
        .map(|i| g.record(format!("NCT{:08}", config.first_id as usize + i)))
        .collect()
}

pub fn generate_synthetic_corpus(seed: u64, n_trials: usize) -> Vec<TrialRecord> {
    generate_with(&SynthConfig::new(seed, n_trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_graph, collect_entity_texts, passes_filters, to_jsonl, NormalizationTable};
    use crate::kg::{NodeType, RelationType};

    #[test]
    fn deterministic_given_seed() {
        let a = to_jsonl(&generate_synthetic_corpus(7, 10));
        let b = to_jsonl(&generate_synthetic_corpus(7, 10));
        assert_eq!(a, b);
        assert_ne!(a, to_jsonl(&generate_synthetic_corpus(8, 10)));
    }

    #[test]
    fn forced_structure_ties_endpoint_to_title() {
        let plain = generate_synthetic_corpus(5, 30);
        assert_eq!(plain, generate_with(&SynthConfig { forced_structure: false, ..SynthConfig::new(5, 30) }));
        for r in generate_with(&SynthConfig { forced_structure: true, ..SynthConfig::new(5, 30) }) {
            assert_eq!(r.primary_endpoints.len(), 1);
            let m = r.primary_endpoints[0].strip_prefix("change from baseline in ").unwrap().strip_suffix(" at week 12").unwrap();
            assert!(r.brief_title.contains(&format!(" on {m} in ")), "{}", r.brief_title);
        }
    }

    #[test]
    fn records_pass_filters_and_parse() {
        let recs = generate_synthetic_corpus(3, 60);
        assert!(recs.iter().all(passes_filters));
        let labels: BTreeSet<&str> = DISEASE_AREAS.iter().map(|(l, _)| *l).collect();
        for r in &recs {
            assert!(labels.contains(r.disease_area.as_str()));
            assert!(!r.primary_endpoints.is_empty());
            let line = serde_json::to_string(r).unwrap();
            assert_eq!(&crate::ingest::parse_trial_record(line.as_bytes()).unwrap(), r);
        }
        let ids: BTreeSet<&str> = recs.iter().map(|r| r.nct_id.as_str()).collect();
        assert_eq!(ids.len(), 60);
    }

    #[test]
    fn near_duplicates_exist() {
        let recs = generate_synthetic_corpus(5, 100);
        let texts = collect_entity_texts(&recs);
        let peps = &texts[&NodeType::Pep];
        let distinct: BTreeSet<&String> = peps.iter().collect();
        assert!(distinct.len() < peps.len(), "some endpoints must be shared");
    }

    // Per-trial node and edge proportions of the reference graph.
    const NODE_TARGETS: [(NodeType, f64); 10] = [
        (NodeType::Ecr, 24349.0),
        (NodeType::Icr, 17050.0),
        (NodeType::Ind, 1035.0),
        (NodeType::Int, 1220.0),
        (NodeType::Moa, 414.0),
        (NodeType::Nct, 2713.0),
        (NodeType::Tgt, 339.0),
        (NodeType::Oep, 792.0),
        (NodeType::Pep, 3997.0),
        (NodeType::Sep, 12229.0),
    ];
    const EDGE_TARGETS: [(RelationType, f64); 15] = [
        (RelationType::IntMoa, 1005.0),
        (RelationType::IntTgt, 753.0),
        (RelationType::MoaTgt, 2156.0),
        (RelationType::NctAge, 2713.0),
        (RelationType::NctCnt, 7865.0),
        (RelationType::NctEcr, 28378.0),
        (RelationType::NctGen, 2708.0),
        (RelationType::NctIcr, 20074.0),
        (RelationType::NctInd, 5100.0),
        (RelationType::NctInt, 4818.0),
        (RelationType::NctPh, 2713.0),
        (RelationType::NctSta, 2713.0),
        (RelationType::NctOep, 807.0),
        (RelationType::NctPep, 4581.0),
        (RelationType::NctSep, 14332.0),
    ];

    #[test]
    fn proportions_track_reference_counts() {
        let n = 2713;
        let recs = generate_synthetic_corpus(7, n);
        let table = NormalizationTable::exact(&collect_entity_texts(&recs));
        let stats = build_graph(&recs, &table).unwrap().stats();
        let scale = n as f64 / 2713.0;
        let mut report = Vec::new();
        for (t, target) in NODE_TARGETS {
            let got = stats.node_count_by_type[&t] as f64;
            report.push((t.tag().to_string(), got, target * scale));
        }
        for (r, target) in EDGE_TARGETS {
            let got = stats.edge_count_by_type[&r] as f64;
            report.push((r.tag().to_string(), got, target * scale));
        }
        report.push(("total nodes".into(), stats.total_nodes as f64, 72522.0 * scale));
        report.push(("total edges".into(), stats.total_edges as f64, 100716.0 * scale));
        let bad: Vec<_> = report
            .iter()
            .filter(|(_, got, want)| (got / want - 1.0).abs() > 0.20)
            .collect();
        assert!(bad.is_empty(), "out of tolerance: {bad:?}\nall: {report:?}");
    }
}
