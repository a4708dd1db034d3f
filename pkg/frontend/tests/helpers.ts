// Test utilities: fixture loading and a scripted mock service that
// replays recorded backend payloads through the injectable fetch.

import { readFileSync } from "node:fs"
import { dirname, join } from "node:path"
import { fileURLToPath } from "node:url"

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures")

export function fixture<T = any>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, `${name}.json`), "utf-8"))
}

export interface RecordedCall {
  url: string
  method: string
  body: any
}

export interface Route {
  method: string
  path: RegExp
  status?: number
  payload: unknown
  once?: boolean
}

export function mockFetch(routes: Route[]) {
  const calls: RecordedCall[] = []
  const remaining = routes.map((r) => ({ ...r, used: false }))

  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = (init?.method ?? "GET").toUpperCase()
    calls.push({
      url,
      method,
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    })
    const route = remaining.find(
      (r) =>
        r.method === method && r.path.test(url) && !(r.once && r.used),
    )
    if (!route) {
      throw new Error(`no route for ${method} ${url}`)
    }
    route.used = true
    const status = route.status ?? 200
    return new Response(JSON.stringify(route.payload), {
      status,
      headers: { "content-type": "application/json" },
    })
  }

  return { fetchFn, calls }
}

export function failingFetch(): (url: string) => Promise<Response> {
  return async () => {
    throw new Error("connection refused")
  }
}
