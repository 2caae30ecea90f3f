#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "followup/corpus.hpp"
#include "followup/rng.hpp"

namespace followup::corpus {

namespace {

// ----------------------------------------------------------------- text pools

struct CuePool {
  std::vector<std::string> templates;  // "{}" slots filled from the lists below
};

const std::vector<std::string>& number_words() {
  static const std::vector<std::string> v = {"two",   "three", "five",
                                             "seven", "ten",   "fourteen"};
  return v;
}

const std::vector<std::string>& services() {
  static const std::vector<std::string> v = {
      "neurology",          "cardiology",       "the surgical clinic",
      "endocrinology",      "gastroenterology", "your primary care provider",
      "the renal clinic"};
  return v;
}

const std::vector<std::string>& drugs() {
  static const std::vector<std::string> v = {"aspirin", "warfarin",
                                             "lisinopril", "metformin",
                                             "furosemide"};
  return v;
}

const std::vector<std::string>& lab_tests() {
  static const std::vector<std::string> v = {"potassium", "creatinine",
                                             "hemoglobin", "tsh"};
  return v;
}

const CuePool& cue_pool(Label l) {
  static const std::array<CuePool, kNumLabels> pools = {{
      // patient_instructions
      {{"do not drive until your {n} week visit",
        "keep the incision clean and dry for {n} days",
        "resume your usual activities gradually over {n} days",
        "call your doctor if you develop fever or chills",
        "avoid heavy lifting for {n} weeks",
        "take all of your prescriptions exactly as written"}},
      // appointment
      {{"please schedule a followup appointment with {svc}",
        "an appointment was arranged with {svc} for next week",
        "attend your clinic visit with {svc} in {n} days",
        "a followup appointment with {svc} should be made within {n} days"}},
      // medication
      {{"hold {drug} for {n} days and then resume your prior dose",
        "complete a {n} day course of antibiotics",
        "taper the prednisone dose down over {n} weeks",
        "restart the {drug} once kidney function improves",
        "the {drug} dose may need adjustment after {n} days"}},
      // lab
      {{"repeat the {test} level in {n} days",
        "pending blood cultures require review after discharge",
        "check the inr twice weekly until values are stable",
        "recheck a basic metabolic panel at the next visit"}},
      // procedure
      {{"followup endoscopy is recommended in {n} weeks",
        "surgical drain removal is planned at the postoperative visit",
        "arrange a colonoscopy for further evaluation of anemia"}},
      // imaging
      {{"repeat chest radiograph in {n} weeks to document resolution",
        "a followup ct scan of the chest is advised to exclude malignancy",
        "obtain a renal ultrasound to reassess the lesion"}},
      // other
      {{"please fax the final pathology results to the covering provider",
        "monitor his nutritional status and trend weights closely",
        "social work will coordinate home services after discharge"}},
  }};
  return pools[static_cast<int>(l)];
}

const std::vector<std::string>& distractor_pool() {
  static const std::vector<std::string> v = {
      "the patient was admitted with shortness of breath",
      "he remained afebrile throughout the stay",
      "vital signs were stable on the day of discharge",
      "the hospital course was uncomplicated",
      "examination showed no acute distress",
      "past medical history includes hypertension and diabetes",
      "he tolerated a regular diet without difficulty",
      "blood pressure remained well controlled on the current regimen",
      "she ambulated in the hallway without assistance",
      "there were no events overnight",
      "the family was updated at the bedside",
      "pain was managed with oral analgesia",
      "oxygen was weaned to room air by hospital day {n}",
      "telemetry showed normal sinus rhythm"};
  return v;
}

const std::vector<std::string>& deid_distractor_pool() {
  static const std::vector<std::string> v = {
      "seen by [**Name**] of the medicine service during the stay",
      "he was transferred from [**Hospital**] on [**2101-03-14**]",
      "questions may be directed to the unit at [**Telephone**]"};
  return v;
}

const std::vector<std::string>& list_item_pool() {
  static const std::vector<std::string> v = {
      "regular diet", "activity as tolerated", "home oxygen at night",
      "physical therapy at home"};
  return v;
}

const std::vector<std::string>& header_pool() {
  static const std::vector<std::string> v = {
      "BRIEF HOSPITAL COURSE:",     "PAST MEDICAL HISTORY:",
      "HISTORY OF PRESENT ILLNESS:", "MEDICATIONS ON ADMISSION:",
      "PHYSICAL EXAM:",             "LABORATORY DATA:",
      "ASSESSMENT AND PLAN:",       "HOSPITAL COURSE BY SYSTEM:"};
  return v;
}

std::string fill_template(const std::string& tpl, Rng& rng) {
  std::string out;
  out.reserve(tpl.size() + 8);
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] != '{') {
      out.push_back(tpl[i++]);
      continue;
    }
    std::size_t close = tpl.find('}', i);
    std::string_view slot(tpl.data() + i + 1, close - i - 1);
    if (slot == "n") {
      out += rng.choice(number_words());
    } else if (slot == "svc") {
      out += rng.choice(services());
    } else if (slot == "drug") {
      out += rng.choice(drugs());
    } else if (slot == "test") {
      out += rng.choice(lab_tests());
    }
    i = close + 1;
  }
  return out;
}

std::string cue_phrase(Label l, Rng& rng) {
  return fill_template(rng.choice(cue_pool(l).templates), rng);
}

std::string sentence_case(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') {
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
  }
  return s;
}

std::string cue_sentence(const std::vector<Label>& labels, Rng& rng) {
  std::string body;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0) body += " and ";
    body += cue_phrase(labels[i], rng);
  }
  return sentence_case(body) + ".";
}

std::string distractor_sentence(Rng& rng) {
  // A small share of filler carries de-id templates so the surrogate path is
  // exercised end to end; another share becomes an enumerated list line.
  double roll = rng.uniform01();
  if (roll < 0.06) {
    std::string filled =
        fill_surrogates(rng.choice(deid_distractor_pool()), rng.next_u64());
    return sentence_case(filled) + ".";
  }
  if (roll < 0.11) {
    return std::to_string(rng.uniform_int(1, 9)) + ". " +
           rng.choice(list_item_pool());
  }
  return sentence_case(fill_template(rng.choice(distractor_pool()), rng)) +
         ".";
}

// --------------------------------------------------------------- apportioning

// Largest-remainder split of `total` proportional to `weights`.
std::vector<long long> apportion(long long total,
                                 const std::vector<double>& weights) {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<long long> out(weights.size(), 0);
  if (total <= 0 || wsum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> rema;
  long long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double share = total * (weights[i] / wsum);
    out[i] = static_cast<long long>(share);
    assigned += out[i];
    rema.push_back({share - static_cast<double>(out[i]), i});
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (long long r = total - assigned; r > 0; --r) {
    out[rema[(total - assigned) - r].second] += 1;
  }
  return out;
}

struct Unit {
  int len = 1;                 // 1, or 2 for an adjacent same-label pair
  std::vector<Label> labels;   // pair: one shared label for both sentences
};

enum class SlotKind { filler, header, labeled, cue };

struct Slot {
  SlotKind kind = SlotKind::filler;
  LabelSet labels;                // for labeled slots
  std::vector<Label> cue_labels;  // for cue slots (in_context mode)
};

}  // namespace

CorpusStats default_targets() {
  CorpusStats t;
  t.per_label = {0.0655, 0.0459, 0.0188, 0.0069, 0.0028, 0.0018, 0.0005};
  t.labeled_fraction = 0.112;
  t.multilabel_fraction = 0.286;
  t.neighbor_fraction = 0.27;
  return t;
}

std::vector<Document> generate_corpus(const GeneratorConfig& cfg) {
  if (cfg.n_documents < 1 || cfg.sentences_min < 3 ||
      cfg.sentences_min > cfg.sentences_max) {
    throw Error(ErrorCode::invalid_config, "invalid generator sizes");
  }
  for (double p : cfg.targets.per_label) {
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::invalid_config, "label prevalence outside [0,1]");
  }
  if (cfg.targets.labeled_fraction < 0.0 ||
      cfg.targets.labeled_fraction > 1.0 ||
      cfg.targets.multilabel_fraction < 0.0 ||
      cfg.targets.multilabel_fraction > 1.0 ||
      cfg.targets.neighbor_fraction < 0.0 ||
      cfg.targets.neighbor_fraction > 1.0) {
    throw Error(ErrorCode::invalid_config, "target fraction outside [0,1]");
  }

  Rng rng = seed_stream(cfg.seed, "corpus");
  const bool in_context = cfg.cue_mode == CueMode::in_context;

  // 1. Document sizes and header positions.
  std::vector<int> sizes(cfg.n_documents);
  std::vector<std::vector<int>> header_at(cfg.n_documents);
  long long total_sentences = 0;
  for (int d = 0; d < cfg.n_documents; ++d) {
    sizes[d] = static_cast<int>(
        rng.uniform_int(cfg.sentences_min, cfg.sentences_max));
    total_sentences += sizes[d];
    int p = 0;
    while (p < sizes[d]) {
      header_at[d].push_back(p);
      p += static_cast<int>(rng.uniform_int(10, 22));
    }
  }
  const long long n_total = total_sentences;

  // 2. Global label budget. Per-label counts are quotas so realized
  // prevalences match the targets to rounding; the sentence-level structure
  // (singles / multi-label / adjacent pairs) is derived from them.
  const long long n_labeled =
      std::llround(cfg.targets.labeled_fraction * static_cast<double>(n_total));
  std::array<long long, kNumLabels> quota{};
  long long quota_sum = 0;
  for (int l = 0; l < kNumLabels; ++l) {
    quota[l] =
        std::llround(cfg.targets.per_label[l] * static_cast<double>(n_total));
    quota_sum += quota[l];
  }
  long long extras = quota_sum - n_labeled;
  if (extras < 0) {
    throw Error(ErrorCode::invalid_config,
                "labeled fraction exceeds the total label prevalence mass");
  }
  long long n_multi = std::llround(cfg.targets.multilabel_fraction *
                                   static_cast<double>(n_labeled));
  n_multi = std::clamp(n_multi, (extras + kNumLabels - 2) / (kNumLabels - 1),
                       extras);
  if (n_multi > n_labeled) {
    throw Error(ErrorCode::invalid_config,
                "label prevalence mass requires more multi-label sentences "
                "than the labeled budget allows");
  }

  // Adjacent same-label pairs realize the neighbor-share target. Cue-in-
  // context corpora skip them: the cue slot must own the adjacency.
  long long n_pairs =
      in_context ? 0
                 : std::llround(0.5 * cfg.targets.neighbor_fraction *
                                static_cast<double>(n_labeled));
  n_pairs = std::min(n_pairs, (n_labeled - n_multi) / 2);

  // 3. Assign labels to units.
  std::array<long long, kNumLabels> remaining = quota;
  std::vector<Unit> units;
  units.reserve(static_cast<std::size_t>(n_labeled));

  {
    std::vector<double> w(quota.begin(), quota.end());
    std::vector<long long> pair_quota = apportion(n_pairs, w);
    for (int l = 0; l < kNumLabels; ++l) {
      pair_quota[l] = std::min(pair_quota[l], remaining[l] / 2);
      for (long long i = 0; i < pair_quota[l]; ++i) {
        units.push_back({2, {static_cast<Label>(l)}});
        remaining[l] -= 2;
      }
    }
  }

  {
    // Extras per multi-label sentence: at least one, at most kNumLabels-1.
    std::vector<int> extra_count(static_cast<std::size_t>(n_multi), 1);
    long long left = extras - n_multi;
    std::size_t idx = 0;
    while (left > 0 && !extra_count.empty()) {
      if (extra_count[idx] < kNumLabels - 1) {
        ++extra_count[idx];
        --left;
      }
      idx = (idx + 1) % extra_count.size();
    }
    for (int e : extra_count) {
      Unit u{1, {}};
      for (int pick = 0; pick < 1 + e; ++pick) {
        int best = -1;
        for (int l = 0; l < kNumLabels; ++l) {
          bool taken = false;
          for (Label la : u.labels) taken |= static_cast<int>(la) == l;
          if (taken || remaining[l] <= 0) continue;
          if (best < 0 || remaining[l] > remaining[best]) best = l;
        }
        if (best < 0) break;
        u.labels.push_back(static_cast<Label>(best));
        --remaining[best];
      }
      if (!u.labels.empty()) units.push_back(std::move(u));
    }
  }

  for (int l = 0; l < kNumLabels; ++l) {
    for (long long i = 0; i < remaining[l]; ++i) {
      units.push_back({1, {static_cast<Label>(l)}});
    }
    remaining[l] = 0;
  }

  // Feasibility: each unit needs its sentences plus a separating slot.
  long long needed = 0;
  for (const Unit& u : units) needed += u.len + (in_context ? 2 : 1);
  long long header_count = 0;
  for (const auto& h : header_at) header_count += static_cast<long long>(h.size());
  if (needed + header_count > n_total) {
    throw Error(ErrorCode::invalid_config,
                "label targets exceed the sentence budget");
  }

  rng.shuffle(units);

  // 4. Deal units to documents proportionally, then place left to right with
  // deterministic jitter. Units that do not fit spill into the next document.
  std::vector<double> doc_weight(sizes.begin(), sizes.end());
  std::vector<long long> per_doc =
      apportion(static_cast<long long>(units.size()), doc_weight);

  std::vector<std::vector<Slot>> doc_slots(cfg.n_documents);
  std::vector<Unit> queue;
  std::size_t unit_next = 0;
  for (int d = 0; d < cfg.n_documents; ++d) {
    std::vector<Slot>& slots = doc_slots[d];
    slots.assign(static_cast<std::size_t>(sizes[d]), Slot{});
    for (int h : header_at[d]) slots[static_cast<std::size_t>(h)].kind = SlotKind::header;

    for (long long i = 0; i < per_doc[d] && unit_next < units.size(); ++i) {
      queue.push_back(units[unit_next++]);
    }

    const int n = sizes[d];
    const int footprint_pad = in_context ? 2 : 1;  // gap, plus cue slot
    int cursor = in_context ? 1 : 0;
    std::size_t qi = 0;
    long long min_rest = 0;
    for (std::size_t j = 0; j < queue.size(); ++j) {
      min_rest += queue[j].len + footprint_pad;
    }
    for (; qi < queue.size(); ++qi) {
      const Unit& u = queue[qi];
      long long units_left = static_cast<long long>(queue.size() - qi);
      long long slack = (n - cursor) - min_rest;
      if (slack > 0 && units_left > 0) {
        long long cap = std::min<long long>(4, slack / units_left + 1);
        cursor += static_cast<int>(rng.uniform_int(0, cap));
      }
      auto valid_at = [&](int s) {
        if (s + u.len > n) return false;
        for (int t = 0; t < u.len; ++t) {
          if (slots[static_cast<std::size_t>(s + t)].kind != SlotKind::filler)
            return false;
        }
        if (in_context) {
          // Cue sentences flank the labeled sentence on both sides.
          if (s == 0 || s + u.len >= n) return false;
          SlotKind left = slots[static_cast<std::size_t>(s - 1)].kind;
          SlotKind right = slots[static_cast<std::size_t>(s + u.len)].kind;
          if (left == SlotKind::header || left == SlotKind::labeled ||
              right == SlotKind::header || right == SlotKind::labeled) {
            return false;
          }
        }
        return true;
      };
      int s = cursor;
      while (s + u.len <= n && !valid_at(s)) ++s;
      if (s + u.len > n) break;  // spill the rest
      for (int t = 0; t < u.len; ++t) {
        Slot& sl = slots[static_cast<std::size_t>(s + t)];
        sl.kind = SlotKind::labeled;
        for (Label la : u.labels) sl.labels.set(la);
      }
      if (in_context) {
        for (int cue_at : {s - 1, s + u.len}) {
          Slot& cueslot = slots[static_cast<std::size_t>(cue_at)];
          cueslot.kind = SlotKind::cue;
          for (Label la : u.labels) cueslot.cue_labels.push_back(la);
        }
      }
      cursor = s + u.len + footprint_pad;
      min_rest -= u.len + footprint_pad;
    }
    queue.erase(queue.begin(),
                queue.begin() + static_cast<std::ptrdiff_t>(qi));
  }
  if (!queue.empty() || unit_next < units.size()) {
    throw Error(ErrorCode::invalid_config,
                "could not place all labeled sentences; sentence budget too "
                "tight for the requested prevalences");
  }

  // 5. Realize text, tokenize, and build documents.
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(cfg.n_documents));
  for (int d = 0; d < cfg.n_documents; ++d) {
    const std::vector<Slot>& slots = doc_slots[d];
    std::string raw;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (i > 0) raw += "\n";
      const Slot& sl = slots[i];
      switch (sl.kind) {
        case SlotKind::header:
          raw += rng.choice(header_pool());
          break;
        case SlotKind::labeled: {
          if (in_context) {
            raw += distractor_sentence(rng);
          } else {
            std::vector<Label> ls;
            for (int l = 0; l < kNumLabels; ++l) {
              if (sl.labels.bits[l]) ls.push_back(static_cast<Label>(l));
            }
            raw += cue_sentence(ls, rng);
          }
          break;
        }
        case SlotKind::cue:
          raw += cue_sentence(sl.cue_labels, rng);
          break;
        case SlotKind::filler:
          raw += distractor_sentence(rng);
          break;
      }
    }

    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "note-%06d", d + 1);
    Document doc = make_document(idbuf, std::move(raw));
    if (doc.sentences.size() != slots.size()) {
      throw Error(ErrorCode::other,
                  "generator internal error: segmentation disagrees with the "
                  "planned layout");
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].kind == SlotKind::labeled) {
        doc.sentences[i].labels = slots[i].labels;
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

Document auto_label_instruction_sections(Document doc) {
  for (Sentence& s : doc.sentences) {
    if (!s.section) continue;
    if (*s.section == "followup instructions" ||
        *s.section == "discharge instructions") {
      s.labels.set(Label::patient_instructions);
    }
  }
  return doc;
}

std::array<std::vector<Document>, 3> split_corpus(
    const std::vector<Document>& docs, const std::array<double, 3>& ratios,
    std::uint64_t seed) {
  if (docs.size() < 3) {
    throw Error(ErrorCode::invalid_config,
                "need at least 3 documents to split");
  }
  double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 ||
      ratios[2] < 0) {
    throw Error(ErrorCode::invalid_config, "split ratios must sum to 1");
  }
  std::vector<long long> counts =
      apportion(static_cast<long long>(docs.size()),
                {ratios[0], ratios[1], ratios[2]});

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = seed_stream(seed, "split");
  rng.shuffle(order);

  std::array<std::vector<Document>, 3> out;
  std::size_t pos = 0;
  for (int part = 0; part < 3; ++part) {
    for (long long i = 0; i < counts[part]; ++i, ++pos) {
      Document d = docs[order[pos]];
      d.split = static_cast<Split>(part);
      out[part].push_back(std::move(d));
    }
  }
  return out;
}

CorpusStats compute_stats(const std::vector<Document>& docs) {
  CorpusStats st;
  long long n = 0, labeled = 0, multi = 0, neighbor = 0;
  std::array<long long, kNumLabels> per{};
  for (const Document& doc : docs) {
    const auto& sents = doc.sentences;
    n += static_cast<long long>(sents.size());
    for (std::size_t i = 0; i < sents.size(); ++i) {
      const LabelSet& ls = sents[i].labels;
      if (!ls.any()) continue;
      ++labeled;
      if (ls.count() >= 2) ++multi;
      for (int l = 0; l < kNumLabels; ++l) per[l] += ls.bits[l] ? 1 : 0;
      bool share = false;
      if (i > 0) share |= ls.shares_any(sents[i - 1].labels);
      if (i + 1 < sents.size()) share |= ls.shares_any(sents[i + 1].labels);
      if (share) ++neighbor;
    }
  }
  if (n > 0) {
    st.labeled_fraction = static_cast<double>(labeled) / static_cast<double>(n);
    for (int l = 0; l < kNumLabels; ++l) {
      st.per_label[l] = static_cast<double>(per[l]) / static_cast<double>(n);
    }
  }
  if (labeled > 0) {
    st.multilabel_fraction =
        static_cast<double>(multi) / static_cast<double>(labeled);
    st.neighbor_fraction =
        static_cast<double>(neighbor) / static_cast<double>(labeled);
  }
  return st;
}

}  // namespace followup::corpus
