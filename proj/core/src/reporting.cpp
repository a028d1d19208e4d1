#include "dbsa/reporting.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dbsa/error.hpp"
#include "dbsa/tokenization.hpp"

namespace dbsa {

namespace {

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v, int decimals) { return fmt::format("{:.{}f}", v, decimals); }

int intensity_of(const SensitivityReport& report, const RenderOptions& options,
                 const std::string& token) {
  if (options.suppressed.contains(token)) return 0;
  auto it = report.normalized_intensity.find(token);
  return it == report.normalized_intensity.end() ? 0 : it->second;
}

const TokenSensitivity* find_token(const SensitivityReport& report, const std::string& token) {
  for (const auto& t : report.tokens) {
    if (t.token == token) return &t;
  }
  return nullptr;
}

std::string alpha_label(double alpha) { return fmt::format("{:g}", alpha); }

}  // namespace

std::string_view to_string(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::ansi: return "ansi";
    case ReportFormat::html: return "html";
    case ReportFormat::json: return "json";
  }
  return "ansi";
}

ReportFormat parse_format(std::string_view name) {
  if (name == "ansi" || name == "text") return ReportFormat::ansi;
  if (name == "html") return ReportFormat::html;
  if (name == "json") return ReportFormat::json;
  throw ArgumentError("unknown report format: " + std::string(name));
}

void RenderOptions::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if (top_k && *top_k < 1) throw ArgumentError("top_k must be >= 1");
  if (decimals < 0 || decimals > 12) throw ArgumentError("decimals must lie in [0, 12]");
}

std::optional<int> ansi_ramp_color(int intensity) {
  if (intensity <= 0) return std::nullopt;
  const int clamped = std::min(intensity, 100);
  const int g = 5 - static_cast<int>(std::ceil(5.0 * clamped / 100.0));
  return 16 + 36 * 5 + 6 * g + g;
}

std::string render(const SensitivityReport& report, const RenderOptions& options) {
  options.validate();
  switch (options.format) {
    case ReportFormat::ansi: return render_ansi(report, options);
    case ReportFormat::html: return render_html(report, options);
    case ReportFormat::json: return report_to_json(report).dump(2) + "\n";
  }
  throw ArgumentError("unknown report format");
}

std::string render_ansi(const SensitivityReport& report, const RenderOptions& options) {
  const TokenizedPrompt tp = tokenize(report.prompt);
  std::string out;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    out += tp.gap_before(i);
    if (auto color = ansi_ramp_color(intensity_of(report, options, tp.tokens[i]))) {
      out += fmt::format("\x1b[48;5;{}m\x1b[30m{}\x1b[0m", *color, tp.tokens[i]);
    } else {
      out += tp.tokens[i];
    }
  }
  out += tp.trailing_text();
  out += "\n";

  if (options.show_p_values) {
    out += "\n";
    for (const auto& t : report.tokens) {
      out += fmt::format("{}\tomega={}\tp={}{}\n", t.token, fixed(t.omega, options.decimals),
                         fixed(t.p_value, options.decimals), t.skipped ? "\tskipped" : "");
    }
  }
  if (options.top_k) {
    out += "\n";
    out += render_top_k_markdown(report, *options.top_k, options.alpha, options.decimals);
  }
  return out;
}

std::string render_html(const SensitivityReport& report, const RenderOptions& options) {
  const TokenizedPrompt tp = tokenize(report.prompt);
  std::string body;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    body += html_escape(tp.gap_before(i));
    const auto& token = tp.tokens[i];
    const int intensity = intensity_of(report, options, token);
    std::string title;
    if (options.show_p_values) {
      if (const auto* t = find_token(report, token)) {
        title = fmt::format(" title=\"&#969;={} p={}\"", fixed(t->omega, options.decimals),
                            fixed(t->p_value, options.decimals));
      }
    }
    if (intensity > 0) {
      body += fmt::format("<span class=\"tok\" style=\"background-color: rgba(255, 0, 0, {:.2f})\""
                          " data-intensity=\"{}\"{}>{}</span>",
                          intensity / 100.0, intensity, title, html_escape(token));
    } else {
      body += fmt::format("<span class=\"tok\" data-intensity=\"0\"{}>{}</span>", title,
                          html_escape(token));
    }
  }
  body += html_escape(tp.trailing_text());

  std::string provenance = report.run_config.dump();
  for (std::size_t p = provenance.find("--"); p != std::string::npos;
       p = provenance.find("--", p)) {
    provenance.replace(p, 2, "- -");
  }

  std::string out;
  out += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  out += "<title>Token sensitivity heatmap</title>\n";
  out += "<!-- run_config: " + provenance + " -->\n";
  out += "<!-- baseline_sample_digest: " + report.baseline_sample_digest + " -->\n";
  out += R"(<style>
body { font-family: Georgia, serif; max-width: 52em; margin: 2em auto; line-height: 1.8; }
.prompt { white-space: pre-wrap; border: 1px solid #ccc; padding: 1em; }
.tok { padding: 0.1em 0; border-radius: 2px; }
.legend { display: flex; align-items: center; gap: 0.6em; margin: 1em 0; font-size: 0.9em; }
.ramp { width: 16em; height: 1em; border: 1px solid #ccc;
        background: linear-gradient(to right, rgba(255,0,0,1), rgba(255,0,0,0)); }
table { border-collapse: collapse; margin-top: 1em; }
th, td { border: 1px solid #ccc; padding: 0.3em 0.8em; text-align: left; }
</style>
</head>
<body>
<div class="legend"><span>Most important</span><span class="ramp"></span><span>Least important</span></div>
)";
  out += "<div class=\"prompt\">" + body + "</div>\n";

  if (options.top_k) {
    const auto rows = top_k_table(report, *options.top_k, options.alpha, false);
    out += "<table class=\"top-k\">\n<thead><tr><th>Word</th><th>Effect size</th>"
           "<th>p-value</th><th>p &lt; " +
           html_escape(alpha_label(options.alpha)) + "</th></tr></thead>\n<tbody>\n";
    for (const auto& r : rows) {
      out += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n",
                         html_escape(r.token), fixed(r.omega, options.decimals),
                         fixed(r.p_value, options.decimals),
                         r.significant ? "&#10003;" : "&#10007;");
    }
    out += "</tbody>\n</table>\n";
  }
  out += "</body>\n</html>\n";
  return out;
}

std::string render_top_k_markdown(const SensitivityReport& report, std::size_t k, double alpha,
                                  int decimals) {
  std::string out = fmt::format("| Word | Effect size | p-value | p < {} |\n", alpha_label(alpha));
  out += "|---|---:|---:|:---:|\n";
  for (const auto& r : top_k_table(report, k, alpha, false)) {
    std::string word = r.token;
    for (std::size_t p = word.find('|'); p != std::string::npos; p = word.find('|', p + 2)) {
      word.replace(p, 1, "\\|");
    }
    out += fmt::format("| {} | {} | {} | {} |\n", word, fixed(r.omega, decimals),
                       fixed(r.p_value, decimals), r.significant ? "✓" : "✗");
  }
  return out;
}

}  // namespace dbsa
