export const SERVICE_URL = "http://127.0.0.1:8809";
