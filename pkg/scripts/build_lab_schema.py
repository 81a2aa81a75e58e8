"""Regenerate src/reportkv/data/lab_schema.json.

    python scripts/build_lab_schema.py

The schema mirrors the shape of a hospital lab-report contract: 13 report
scenarios with 137 detail items plus 18 general-information fields.
"""

from __future__ import annotations

from pathlib import Path

from reportkv.schema import FewShotDirective, FieldSpec, ScenarioSpec, Schema, dump_schema, validate_schema

OUT = Path(__file__).resolve().parents[1] / "src" / "reportkv" / "data" / "lab_schema.json"

SIGN = {"+": "positive", "-": "negative", "阳性": "positive", "阴性": "negative", "pos": "positive", "neg": "negative"}
GRADED = {"-": "negative", "+-": "trace", "±": "trace", "+": "1+", "++": "2+", "+++": "3+", "阴性": "negative"}


def f(key, value_type="float", unit=None, aliases=(), conv=None, options=None, desc=""):
    conversions = dict(conv or {})
    return FieldSpec(key=key, value_type=value_type, aliases=tuple(aliases), canonical_unit=unit,
                     unit_conversions=conversions, options=options, description=desc)


def sc(id, name, cues, fields, directives=()):
    return ScenarioSpec(id=id, name=name, cues=tuple(cues), fields=tuple(fields),
                        few_shot_directives=tuple(FewShotDirective(c, d) for c, d in directives))


SCENARIOS = [
    sc("cbc", "Complete Blood Count", ["WBC", "RBC", "Hemoglobin", "Platelet"], [
        f("White Blood Cell Count (WBC)", unit="10^9/L", aliases=["WBC", "Leukocytes"], conv={"10^3/uL": 1.0}),
        f("Red Blood Cell Count (RBC)", unit="10^12/L", aliases=["RBC", "Erythrocytes"], conv={"10^6/uL": 1.0}),
        f("Hemoglobin (HGB)", unit="g/L", aliases=["HGB", "Hb", "Hemoglobin"], conv={"g/dL": 10.0}),
        f("Hematocrit (HCT)", unit="%", aliases=["HCT"]),
        f("Mean Corpuscular Volume (MCV)", unit="fL", aliases=["MCV"]),
        f("Mean Corpuscular Hemoglobin (MCH)", unit="pg", aliases=["MCH"]),
        f("Mean Corpuscular Hemoglobin Concentration (MCHC)", unit="g/L", aliases=["MCHC"], conv={"g/dL": 10.0}),
        f("Platelet Count (PLT)", unit="10^9/L", aliases=["PLT", "Platelets"], conv={"10^3/uL": 1.0}),
        f("Red Cell Distribution Width (RDW-CV)", unit="%", aliases=["RDW-CV", "RDW"]),
        f("Mean Platelet Volume (MPV)", unit="fL", aliases=["MPV"]),
        f("Neutrophil Percentage (NEUT%)", unit="%", aliases=["NEUT%"]),
        f("Lymphocyte Percentage (LYMPH%)", unit="%", aliases=["LYMPH%"]),
        f("Monocyte Percentage (MONO%)", unit="%", aliases=["MONO%"]),
        f("Eosinophil Percentage (EO%)", unit="%", aliases=["EO%"]),
        f("Basophil Percentage (BASO%)", unit="%", aliases=["BASO%"]),
        f("Neutrophil Count (NEUT#)", unit="10^9/L", aliases=["NEUT#"]),
        f("Lymphocyte Count (LYMPH#)", unit="10^9/L", aliases=["LYMPH#"]),
        f("Monocyte Count (MONO#)", unit="10^9/L", aliases=["MONO#"]),
        f("Eosinophil Count (EO#)", unit="10^9/L", aliases=["EO#"]),
        f("Basophil Count (BASO#)", unit="10^9/L", aliases=["BASO#"]),
        f("Erythrocyte Sedimentation Rate (ESR)", unit="mm/h", aliases=["Sed rate", "ESR"]),
    ], [("the OCR text lists WBC, RBC, Hemoglobin and Platelet counts",
         "the document is likely a Complete Blood Count report")]),
    sc("urinalysis", "Urinalysis", ["Specific Gravity", "Urine Protein", "Nitrite"], [
        f("Urine Color", "string", aliases=["Color"]),
        f("Urine Clarity", "dictionary", aliases=["Clarity", "Turbidity"],
          options={"clear": "clear", "slightly cloudy": "slightly cloudy", "cloudy": "cloudy", "清": "clear", "浑浊": "cloudy"}),
        f("Urine Specific Gravity (SG)", aliases=["Specific Gravity", "SG"]),
        f("Urine pH", aliases=["pH"]),
        f("Urine Protein (PRO)", "dictionary", aliases=["PRO", "Urine Protein"], options=GRADED),
        f("Urine Glucose (GLU)", "dictionary", aliases=["Urine Glucose", "U-GLU"], options=GRADED),
        f("Ketone Bodies (KET)", "dictionary", aliases=["KET", "Ketones"], options=GRADED),
        f("Occult Blood (BLD)", "dictionary", aliases=["BLD", "Occult Blood"], options=GRADED),
        f("Urine Bilirubin (BIL)", "dictionary", aliases=["Urine Bilirubin", "U-BIL"], options=SIGN),
        f("Urobilinogen (URO)", "dictionary", aliases=["URO"], options={"normal": "normal", "+": "1+", "++": "2+", "正常": "normal"}),
        f("Nitrite (NIT)", "dictionary", aliases=["NIT", "Nitrite"], options=SIGN),
        f("Leukocyte Esterase (LEU)", "dictionary", aliases=["LEU"], options=GRADED),
        f("Urine Red Blood Cells", unit="/HP", aliases=["U-RBC", "RBC/HP"], conv={"cells/HP": 1.0}),
        f("Urine White Blood Cells", unit="/HP", aliases=["U-WBC", "WBC/HP"], conv={"cells/HP": 1.0}),
    ]),
    sc("cmp", "Comprehensive Metabolic Panel", ["Sodium", "Potassium", "Creatinine", "ALT"], [
        f("Glucose (GLU)", unit="mmol/L", aliases=["GLU", "Glucose"], conv={"mg/dL": 0.0555}),
        f("Blood Urea Nitrogen (BUN)", unit="mmol/L", aliases=["BUN", "Urea"]),
        f("Creatinine (Cr)", unit="umol/L", aliases=["Cr", "Creatinine", "CREA"], conv={"mg/dL": 88.4}),
        f("Sodium (Na)", unit="mmol/L", aliases=["Na", "Sodium"], conv={"mEq/L": 1.0}),
        f("Potassium (K)", unit="mmol/L", aliases=["K", "Potassium"], conv={"mEq/L": 1.0}),
        f("Chloride (Cl)", unit="mmol/L", aliases=["Cl", "Chloride"], conv={"mEq/L": 1.0}),
        f("Carbon Dioxide (CO2)", unit="mmol/L", aliases=["CO2", "Bicarbonate"]),
        f("Calcium (Ca)", unit="mmol/L", aliases=["Ca", "Calcium"], conv={"mg/dL": 0.25}),
        f("Total Protein (TP)", unit="g/L", aliases=["TP", "Total Protein"], conv={"g/dL": 10.0}),
        f("Albumin (ALB)", unit="g/L", aliases=["ALB", "Albumin"], conv={"g/dL": 10.0}),
        f("Total Bilirubin (TBIL)", unit="umol/L", aliases=["TBIL"], conv={"mg/dL": 17.1}),
        f("Alkaline Phosphatase (ALP)", unit="U/L", aliases=["ALP"], conv={"IU/L": 1.0}),
        f("Alanine Aminotransferase (ALT)", unit="U/L", aliases=["ALT", "GPT"], conv={"IU/L": 1.0}),
        f("Aspartate Aminotransferase (AST)", unit="U/L", aliases=["AST", "GOT"], conv={"IU/L": 1.0}),
    ]),
    sc("iron5", "Five Iron Profile", ["Total Iron Binding Capacity (TIBC)", "Serum Ferritin (SF)"], [
        f("Serum Iron (SI)", unit="umol/L", aliases=["SI", "Serum Iron", "Fe"], conv={"ug/dL": 0.179}),
        f("Total Iron Binding Capacity (TIBC)", unit="umol/L", aliases=["TIBC"], conv={"ug/dL": 0.179}),
        f("Unsaturated Iron Binding Capacity (UIBC)", unit="umol/L", aliases=["UIBC"]),
        f("Transferrin Saturation (TS)", unit="%", aliases=["TS", "TSAT"]),
        f("Serum Ferritin (SF)", unit="ng/mL", aliases=["SF", "Ferritin"], conv={"ug/L": 1.0}),
    ], [("the OCR text includes medical terms like Total Iron Binding Capacity (TIBC) and Serum Ferritin (SF)",
         "the document is likely a Five Iron Profile medical report")]),
    sc("bone", "Bone Metabolism Panel", ["25-OH Vitamin D", "Osteocalcin", "beta-CTX"], [
        f("25-Hydroxyvitamin D (25-OH-D)", unit="ng/mL", aliases=["25-OH Vitamin D", "25-OH-D"], conv={"nmol/L": 0.4}),
        f("Parathyroid Hormone (PTH)", unit="pg/mL", aliases=["PTH"], conv={"pmol/L": 9.43}),
        f("N-MID Osteocalcin", unit="ng/mL", aliases=["Osteocalcin", "N-MID"]),
        f("Total Procollagen Type 1 N-Terminal Propeptide (P1NP)", unit="ng/mL", aliases=["P1NP", "TP1NP"]),
        f("Beta C-Terminal Telopeptide (beta-CTX)", unit="ng/mL", aliases=["beta-CTX", "CTX"]),
        f("Serum Phosphorus (P)", unit="mmol/L", aliases=["Phosphorus", "PHOS"]),
        f("Serum Magnesium (Mg)", unit="mmol/L", aliases=["Mg", "Magnesium"]),
        f("Bone Alkaline Phosphatase (BALP)", unit="U/L", aliases=["BALP"]),
    ]),
    sc("lipid", "Lipid Panel", ["Triglycerides", "HDL-C", "LDL-C"], [
        f("Total Cholesterol (TC)", unit="mmol/L", aliases=["TC", "CHOL"], conv={"mg/dL": 0.02586}),
        f("Triglycerides (TG)", unit="mmol/L", aliases=["TG", "Triglycerides"], conv={"mg/dL": 0.01129}),
        f("High-Density Lipoprotein Cholesterol (HDL-C)", unit="mmol/L", aliases=["HDL-C", "HDL"], conv={"mg/dL": 0.02586}),
        f("Low-Density Lipoprotein Cholesterol (LDL-C)", unit="mmol/L", aliases=["LDL-C", "LDL"], conv={"mg/dL": 0.02586}),
        f("Apolipoprotein A1 (ApoA1)", unit="g/L", aliases=["ApoA1", "Apo A1"]),
        f("Apolipoprotein B (ApoB)", unit="g/L", aliases=["ApoB", "Apo B"]),
        f("Lipoprotein(a) (Lp(a))", unit="mg/L", aliases=["Lp(a)", "LPA"]),
        f("Non-HDL Cholesterol", unit="mmol/L", aliases=["Non-HDL-C"]),
    ]),
    sc("coag", "Coagulation Panel", ["Prothrombin Time", "APTT", "Fibrinogen"], [
        f("Prothrombin Time (PT)", unit="s", aliases=["PT", "Prothrombin Time"]),
        f("International Normalized Ratio (INR)", aliases=["INR", "PT-INR"]),
        f("Activated Partial Thromboplastin Time (APTT)", unit="s", aliases=["APTT"]),
        f("Thrombin Time (TT)", unit="s", aliases=["TT"]),
        f("Fibrinogen (FIB)", unit="g/L", aliases=["FIB", "Fibrinogen"], conv={"mg/dL": 0.01}),
        f("D-Dimer", unit="mg/L FEU", aliases=["D-D", "DD"], conv={"ug/mL FEU": 1.0}),
        f("Fibrin Degradation Products (FDP)", unit="ug/mL", aliases=["FDP"], conv={"mg/L": 1.0}),
        f("Antithrombin III (AT-III)", unit="%", aliases=["AT-III", "ATIII"]),
    ]),
    sc("thyroid", "Thyroid Function", ["TSH", "FT3", "FT4"], [
        f("Thyroid Stimulating Hormone (TSH)", unit="uIU/mL", aliases=["TSH"], conv={"mIU/L": 1.0}),
        f("Free Triiodothyronine (FT3)", unit="pmol/L", aliases=["FT3"]),
        f("Free Thyroxine (FT4)", unit="pmol/L", aliases=["FT4"]),
        f("Total Triiodothyronine (TT3)", unit="nmol/L", aliases=["TT3", "T3"]),
        f("Total Thyroxine (TT4)", unit="nmol/L", aliases=["TT4", "T4"]),
        f("Anti-Thyroid Peroxidase Antibody (TPOAb)", unit="IU/mL", aliases=["TPOAb", "Anti-TPO"]),
        f("Anti-Thyroglobulin Antibody (TgAb)", unit="IU/mL", aliases=["TgAb", "Anti-Tg"]),
        f("Thyroglobulin (Tg)", unit="ng/mL", aliases=["Tg"]),
        f("Reverse T3 (rT3)", unit="ng/mL", aliases=["rT3"]),
    ]),
    sc("liver", "Liver Function Tests", ["GGT", "Direct Bilirubin", "Total Bile Acids"], [
        f("Gamma-Glutamyl Transferase (GGT)", unit="U/L", aliases=["GGT", "gamma-GT"]),
        f("Direct Bilirubin (DBIL)", unit="umol/L", aliases=["DBIL", "Direct Bilirubin"], conv={"mg/dL": 17.1}),
        f("Indirect Bilirubin (IBIL)", unit="umol/L", aliases=["IBIL", "Indirect Bilirubin"]),
        f("Globulin (GLB)", unit="g/L", aliases=["GLB", "Globulin"]),
        f("Albumin/Globulin Ratio (A/G)", aliases=["A/G", "A/G Ratio"]),
        f("Prealbumin (PA)", unit="mg/L", aliases=["PA", "Prealbumin"]),
        f("Total Bile Acids (TBA)", unit="umol/L", aliases=["TBA"]),
        f("Cholinesterase (CHE)", unit="U/L", aliases=["CHE", "ChE"], conv={"kU/L": 1000.0}),
        f("Lactate Dehydrogenase (LDH)", unit="U/L", aliases=["LDH"]),
        f("Adenosine Deaminase (ADA)", unit="U/L", aliases=["ADA"]),
        f("5'-Nucleotidase (5'-NT)", unit="U/L", aliases=["5'-NT", "5NT"]),
        f("AST/ALT Ratio", aliases=["AST/ALT", "De Ritis Ratio"]),
    ]),
    sc("renal", "Renal Function", ["Uric Acid", "Cystatin C", "eGFR"], [
        f("Uric Acid (UA)", unit="umol/L", aliases=["UA", "Uric Acid"], conv={"mg/dL": 59.48}),
        f("Cystatin C (Cys-C)", unit="mg/L", aliases=["Cys-C", "CysC"]),
        f("Estimated Glomerular Filtration Rate (eGFR)", unit="mL/min/1.73m2", aliases=["eGFR"]),
        f("Beta-2 Microglobulin (B2-MG)", unit="mg/L", aliases=["B2-MG", "beta2-MG"]),
        f("Urine Microalbumin (mALB)", unit="mg/L", aliases=["mALB", "Microalbumin"]),
        f("Urine Creatinine (UCr)", unit="umol/L", aliases=["UCr"]),
        f("Urine Albumin/Creatinine Ratio (ACR)", unit="mg/g", aliases=["ACR", "UACR"]),
        f("Retinol Binding Protein (RBP)", unit="mg/L", aliases=["RBP"]),
        f("Urine N-Acetyl-beta-D-Glucosaminidase (NAG)", unit="U/L", aliases=["NAG"]),
    ]),
    sc("inflam", "Inflammation Markers", ["C-Reactive Protein", "Procalcitonin", "Serum Amyloid A"], [
        f("C-Reactive Protein (CRP)", unit="mg/L", aliases=["CRP"], conv={"mg/dL": 10.0}),
        f("High-Sensitivity C-Reactive Protein (hs-CRP)", unit="mg/L", aliases=["hs-CRP", "hsCRP"]),
        f("Procalcitonin (PCT)", unit="ng/mL", aliases=["PCT"], conv={"ug/L": 1.0}),
        f("Interleukin-6 (IL-6)", unit="pg/mL", aliases=["IL-6", "IL6"]),
        f("Serum Amyloid A (SAA)", unit="mg/L", aliases=["SAA"]),
        f("Rheumatoid Factor (RF)", unit="IU/mL", aliases=["RF"]),
        f("Antistreptolysin O (ASO)", unit="IU/mL", aliases=["ASO"]),
    ]),
    sc("glyco", "Diabetes Panel", ["HbA1c", "C-Peptide", "Insulin"], [
        f("Glycated Hemoglobin (HbA1c)", unit="%", aliases=["HbA1c", "A1c"]),
        f("Fasting Insulin (INS)", unit="uIU/mL", aliases=["INS", "Insulin"], conv={"pmol/L": 0.144}),
        f("C-Peptide (C-P)", unit="ng/mL", aliases=["C-P", "C-Peptide"], conv={"nmol/L": 3.02}),
        f("Fructosamine (FMN)", unit="mmol/L", aliases=["FMN", "Fructosamine"]),
        f("Glycated Albumin (GA)", unit="%", aliases=["GA"]),
        f("Fasting Plasma Glucose (FPG)", unit="mmol/L", aliases=["FPG", "Fasting Glucose"], conv={"mg/dL": 0.0555}),
        f("2-Hour Postprandial Glucose (2hPG)", unit="mmol/L", aliases=["2hPG", "2h PG"], conv={"mg/dL": 0.0555}),
    ]),
    sc("physical", "Physical Examination", ["Height", "Weight", "Blood Pressure"], [
        f("Height", unit="cm", aliases=["Body Height", "身高"], conv={"m": 100.0, "mm": 0.1}),
        f("Weight", unit="kg", aliases=["Body Weight", "体重"], conv={"g": 0.001, "jin": 0.5}),
        f("Body Mass Index (BMI)", unit="kg/m2", aliases=["BMI"]),
        f("Systolic Blood Pressure (SBP)", "integer", unit="mmHg", aliases=["SBP", "Systolic BP"]),
        f("Diastolic Blood Pressure (DBP)", "integer", unit="mmHg", aliases=["DBP", "Diastolic BP"]),
        f("Heart Rate (HR)", "integer", unit="bpm", aliases=["HR", "Pulse"], conv={"beats/min": 1.0}),
        f("Body Temperature", unit="°C", aliases=["Temperature", "Temp"]),
        f("Waist Circumference", unit="cm", aliases=["Waist"], conv={"m": 100.0}),
        f("Hip Circumference", unit="cm", aliases=["Hip"], conv={"m": 100.0}),
        f("Respiratory Rate (RR)", "integer", unit="breaths/min", aliases=["RR"]),
        f("Visual Acuity Left", "string", aliases=["VA OS", "Left Eye"]),
        f("Visual Acuity Right", "string", aliases=["VA OD", "Right Eye"]),
        f("ABO Blood Type", "dictionary", aliases=["Blood Type", "ABO"],
          options={"A": "A", "B": "B", "AB": "AB", "O": "O", "A型": "A", "B型": "B", "AB型": "AB", "O型": "O"}),
        f("Rh Factor", "dictionary", aliases=["Rh", "RhD"], options=SIGN),
        f("Smoking Status", "dictionary", aliases=["Smoking"],
          options={"never": "never", "former": "former", "current": "current", "no": "never", "yes": "current"}),
    ]),
]

GENERAL = [
    f("Patient Name", "string", aliases=["Name", "姓名"]),
    f("Gender", "dictionary", aliases=["Sex", "性别"], options={"男": "male", "女": "female", "M": "male", "F": "female", "male": "male", "female": "female"}),
    f("Age", "integer", unit="years", aliases=["年龄"], conv={"岁": 1.0}),
    f("Date of Birth", "datetime", aliases=["DOB", "Birth Date"]),
    f("Medical Record Number", "string", aliases=["MRN", "Medical Record No.", "病案号"]),
    f("ID Number", "string", aliases=["ID", "身份证号"]),
    f("Phone Number", "string", aliases=["Phone", "Tel", "电话"]),
    f("Department", "string", aliases=["Dept", "科室"]),
    f("Ward", "string", aliases=["病区"]),
    f("Bed Number", "string", aliases=["Bed No.", "Bed", "床号"], desc="stored as text even when printed as an integer"),
    f("Specimen Type", "string", aliases=["Specimen", "Sample Type", "标本类型"]),
    f("Sample Number", "string", aliases=["Sample No.", "样本号"]),
    f("Referring Physician", "string", aliases=["Physician", "Doctor", "送检医生"]),
    f("Clinical Diagnosis", "string", aliases=["Diagnosis", "临床诊断"]),
    f("Collection Time", "datetime", aliases=["Collected", "采样时间"]),
    f("Received Time", "datetime", aliases=["Received", "接收时间"]),
    f("Report Time", "datetime", aliases=["Reported", "报告时间"]),
    f("Hospital", "string", aliases=["Institution", "医院"]),
]


def build() -> Schema:
    return Schema(scenarios=tuple(SCENARIOS), general_fields=tuple(GENERAL), version=1)


if __name__ == "__main__":
    schema = build()
    problems = validate_schema(schema)
    if problems:
        raise SystemExit("\n".join(map(str, problems)))
    OUT.write_bytes(dump_schema(schema))
    print(f"{OUT}: {len(schema.scenarios)} scenarios, {schema.field_count()} fields, {len(schema.general_fields)} general")
